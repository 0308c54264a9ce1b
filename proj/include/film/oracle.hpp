#pragma once

// Brute-force reference implementations backing the test suite. Everything
// here evaluates the defining formulas literally with dense algebra and
// per-triplet loops, deliberately sharing no kernels with the solver. Not for
// production use; inputs are capped at desk scale.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "film/triplets.hpp"

namespace film::oracle {

inline constexpr int kMaxSamples = 64;
inline constexpr int kMaxFeatures = 128;

inline void check_desk_scale(Eigen::Index n, Eigen::Index dim) {
  if (n > kMaxSamples || dim > kMaxFeatures)
    throw std::invalid_argument("oracle: instance exceeds desk scale");
}

// Naive log(1 + exp(x)); adequate at desk scale without the overflow-safe
// split used by the production path.
inline double mu_naive(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

inline double sigma_naive(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Average hinge loss evaluated literally per anchor:
//   sum_i max(0, (1 / (|T_i| + 1)) * sum_{(i,j,k) in T_i} (sim(y_i, y_k) + m - sim(y_i, y_j)))
// with sim the dot product. `reverse_order` flips the summation order for the
// evaluation-order independence check. Note the margin enters once per
// triplet here (the pre-reformulation loss); the reformulated objective
// applies it once per anchor -- see anchor_hinge_objective.
inline double triplet_loss_direct(const Eigen::MatrixXd& y, const TripletSet& ts, double margin,
                                  bool reverse_order = false) {
  check_desk_scale(y.cols(), y.rows());
  std::vector<int> anchors;
  for (const auto& [anchor, _] : ts.per_anchor) anchors.push_back(anchor);
  std::sort(anchors.begin(), anchors.end());
  if (reverse_order) std::reverse(anchors.begin(), anchors.end());
  double total = 0.0;
  for (int anchor : anchors) {
    const auto& indices = ts.per_anchor.at(anchor);
    double s = 0.0;
    if (!reverse_order) {
      for (size_t idx : indices) {
        const Triplet& t = ts.items[idx];
        s += y.col(t.anchor).dot(y.col(t.negative)) + margin -
             y.col(t.anchor).dot(y.col(t.positive));
      }
    } else {
      for (auto it = indices.rbegin(); it != indices.rend(); ++it) {
        const Triplet& t = ts.items[*it];
        s += y.col(t.anchor).dot(y.col(t.negative)) + margin -
             y.col(t.anchor).dot(y.col(t.positive));
      }
    }
    total += std::max(0.0, s / (static_cast<double>(indices.size()) + 1.0));
  }
  return total;
}

// Reformulated per-anchor hinge sum_i max(0, z_i + m) with the margin applied
// once per anchor after averaging; this is the quantity the matrix path
// optimizes.
inline double anchor_hinge_objective(const Eigen::MatrixXd& y, const TripletSet& ts,
                                     double margin) {
  check_desk_scale(y.cols(), y.rows());
  double total = 0.0;
  for (const auto& [anchor, indices] : ts.per_anchor) {
    double s = 0.0;
    for (size_t idx : indices) {
      const Triplet& t = ts.items[idx];
      s += y.col(t.anchor).dot(y.col(t.negative)) - y.col(t.anchor).dot(y.col(t.positive));
    }
    total += std::max(0.0, s / (static_cast<double>(indices.size()) + 1.0) + margin);
  }
  return total;
}

// Right-hand side of the trace identity: sum_i sum_{T_i} (sim(y_i,y_k) - sim(y_i,y_j)).
inline double trace_identity_rhs(const Eigen::MatrixXd& y, const TripletSet& ts) {
  check_desk_scale(y.cols(), y.rows());
  double total = 0.0;
  for (const auto& t : ts.items) {
    total += y.col(t.anchor).dot(y.col(t.negative)) - y.col(t.anchor).dot(y.col(t.positive));
  }
  return total;
}

// Every intermediate of the formalization evaluated with explicit dense
// matrices (C, T, Lambda all materialized n x n).
struct DenseIntermediates {
  Eigen::MatrixXd y;             // d x n, sqrt(S) P^T V^T at the given scales
  Eigen::MatrixXd c;             // n x n
  Eigen::MatrixXd t;             // n x n diagonal
  Eigen::VectorXd z;             // from the dense diagonal
  Eigen::VectorXd z_triplet;     // from the per-triplet route
  Eigen::MatrixXd lambda;        // n x n diagonal indicator
  Eigen::MatrixXd k;             // r x r
  Eigen::VectorXd s_star;        // closed-form scales from the dense K
  double f0_state = 0.0;         // penalized objective at the given scales
  double f1 = 0.0;               // objective at s_star (the Eq-17 quantity)
  double f2 = 0.0;               // smoothed objective
  Eigen::MatrixXd grad_f2;       // r x d
  std::vector<Eigen::VectorXd> y_tilde;  // per-sample sum of (-y_j + y_k)
};

inline DenseIntermediates dense_pipeline(const Eigen::MatrixXd& v, const TripletSet& ts,
                                         const Eigen::MatrixXd& p, const Eigen::VectorXd& s,
                                         double margin) {
  const Eigen::Index n = v.rows();
  const Eigen::Index r = v.cols();
  const Eigen::Index d = p.cols();
  check_desk_scale(n, r);
  if (p.rows() != r) throw std::invalid_argument("dense_pipeline: P rows must equal rank");

  DenseIntermediates out;
  // Y = B V^T with B = sqrt(S) P^T.
  const Eigen::MatrixXd b = s.cwiseSqrt().asDiagonal() * p.transpose();
  out.y = b * v.transpose();

  out.c = Eigen::MatrixXd::Zero(n, n);
  for (const auto& t : ts.items) {
    out.c(t.positive, t.anchor) += 1.0;
    out.c(t.negative, t.anchor) -= 1.0;
  }
  out.t = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.t(i, i) = 1.0 / (static_cast<double>(ts.anchor_count(static_cast<int>(i))) + 1.0);
  }

  // y_tilde_i = sum over T_i of (-y_j + y_k), then z both ways.
  out.y_tilde.assign(static_cast<size_t>(n), Eigen::VectorXd::Zero(d));
  for (const auto& t : ts.items) {
    out.y_tilde[static_cast<size_t>(t.anchor)] += -out.y.col(t.positive) + out.y.col(t.negative);
  }
  out.z_triplet.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.z_triplet[i] = out.t(i, i) * out.y.col(i).dot(out.y_tilde[static_cast<size_t>(i)]);
  }
  const Eigen::MatrixXd zmat = -(out.y.transpose() * out.y) * out.c * out.t;
  out.z = zmat.diagonal();

  out.lambda = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (out.z[i] + margin > 0.0) out.lambda(i, i) = 1.0;
  }

  out.k = -(v.transpose() * out.c * out.t * out.lambda * v);

  const double m_term = margin * out.lambda.trace();
  // Penalized objective at the given scales via the dense matrix route:
  // -tr(B^T B V^T C T Lambda V) + 1/2 ||s||^2 + m tr(Lambda).
  out.f0_state = -(b.transpose() * b * v.transpose() * out.c * out.t * out.lambda * v).trace() +
                 0.5 * s.squaredNorm() + m_term;

  out.s_star.resize(d);
  for (Eigen::Index i = 0; i < d; ++i)
    out.s_star[i] = std::max(0.0, -p.col(i).dot(out.k * p.col(i)));
  // Same matrix route evaluated at the closed-form scales; this equals the
  // scalar form -1/2 sum_i k_i max(0, k_i) + m tr(Lambda).
  const Eigen::MatrixXd b_star = out.s_star.cwiseSqrt().asDiagonal() * p.transpose();
  out.f1 = -(b_star.transpose() * b_star * v.transpose() * out.c * out.t * out.lambda * v).trace() +
           0.5 * out.s_star.squaredNorm() + m_term;

  out.f2 = m_term;
  Eigen::VectorXd q(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double ki = -p.col(i).dot(out.k * p.col(i));
    out.f2 += -0.5 * ki * mu_naive(ki);
    q[i] = -0.5 * (mu_naive(ki) + ki * sigma_naive(ki));
  }
  out.grad_f2 = -(out.k + out.k.transpose()) * p * q.asDiagonal();
  return out;
}

// Central finite differences of a scalar function of P, entry by entry in the
// ambient space (the active set is whatever the evaluator freezes).
inline Eigen::MatrixXd finite_difference_grad(
    const Eigen::MatrixXd& p, const std::function<double(const Eigen::MatrixXd&)>& evaluate,
    double h) {
  if (h < 1e-8 || h > 1e-4) throw std::invalid_argument("finite_difference_grad: h out of range");
  Eigen::MatrixXd grad(p.rows(), p.cols());
  Eigen::MatrixXd probe = p;
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      probe(i, j) = p(i, j) + h;
      const double f_plus = evaluate(probe);
      probe(i, j) = p(i, j) - h;
      const double f_minus = evaluate(probe);
      probe(i, j) = p(i, j);
      if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
        throw std::invalid_argument("finite_difference_grad: non-finite evaluation");
      grad(i, j) = (f_plus - f_minus) / (2.0 * h);
    }
  }
  return grad;
}

// 1-D grid + refinement minimizer of 0.5 s^2 + s * c over s >= 0; reference
// for the closed-form scales.
inline double scale_minimizer_grid(double c, int grid_points = 2000, int refinements = 40) {
  const double hi = std::abs(c) + 1.0;
  double best_s = 0.0;
  double best_val = 0.0;  // value at s = 0
  for (int g = 0; g <= grid_points; ++g) {
    const double s = hi * static_cast<double>(g) / grid_points;
    const double val = 0.5 * s * s + s * c;
    if (val < best_val) {
      best_val = val;
      best_s = s;
    }
  }
  double lo = std::max(0.0, best_s - hi / grid_points);
  double up = std::min(hi, best_s + hi / grid_points);
  for (int it = 0; it < refinements; ++it) {
    const double third = (up - lo) / 3.0;
    const double a = lo + third;
    const double b = up - third;
    const double fa = 0.5 * a * a + a * c;
    const double fb = 0.5 * b * b + b * c;
    if (fa < fb) up = b; else lo = a;
  }
  const double s = 0.5 * (lo + up);
  return (0.5 * s * s + s * c < 0.0) ? s : 0.0;
}

}  // namespace film::oracle
