#pragma once

#include <Eigen/Dense>
#include <Eigen/LU>
#include <cmath>
#include <functional>
#include <limits>

#include "film/common.hpp"
#include "film/rng.hpp"

namespace film {

// Points on St(d, r) are r x d matrices P with P^T P = I_d.

inline double feasibility_error(const Eigen::MatrixXd& p) {
  const Eigen::Index d = p.cols();
  return (p.transpose() * p - Eigen::MatrixXd::Identity(d, d)).norm();
}

// Orthonormal factor of a seeded Gaussian matrix; signs fixed by the R
// diagonal so the draw is unambiguous.
inline Eigen::MatrixXd random_stiefel(Eigen::Index r, Eigen::Index d, Rng& rng) {
  if (d < 1 || r < d) throw std::invalid_argument("random_stiefel: need r >= d >= 1");
  Eigen::MatrixXd g(r, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < r; ++i) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(r, d);
  const Eigen::MatrixXd rmat = qr.matrixQR().topRows(d).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < d; ++j)
    if (rmat(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

// Gradient of the Lagrangian: F(P) = grad - P grad^T P. Vanishes exactly at
// first-order stationary points of the constrained problem.
inline Eigen::MatrixXd lagrangian_gradient(const Eigen::MatrixXd& p, const Eigen::MatrixXd& grad) {
  if (p.rows() != grad.rows() || p.cols() != grad.cols())
    throw std::invalid_argument("lagrangian_gradient: shape mismatch");
  return grad - p * (grad.transpose() * p);
}

// P+ = (I + tau/2 A)^{-1} (I - tau/2 A) P with A = grad P^T - P grad^T,
// solved as an r x r system. One step of iterative refinement keeps the
// result orthonormal even for extreme tau * ||A||.
inline Eigen::MatrixXd cayley_update_direct(const Eigen::MatrixXd& p, const Eigen::MatrixXd& grad,
                                            double tau) {
  if (!p.allFinite() || !grad.allFinite() || !std::isfinite(tau))
    throw NumericalError("cayley_update: non-finite input");
  const Eigen::Index r = p.rows();
  const Eigen::MatrixXd a = grad * p.transpose() - p * grad.transpose();
  const Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(r, r) + (tau / 2.0) * a;
  const Eigen::MatrixXd rhs = p - (tau / 2.0) * (a * p);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(lhs);
  Eigen::MatrixXd next = lu.solve(rhs);
  next += lu.solve(rhs - lhs * next);
  return next;
}

// Sherman-Morrison-Woodbury form of the same update: the solve shrinks to a
// 2d x 2d system via A = F G^T with F = [grad, P], G = [P, -grad].
inline Eigen::MatrixXd cayley_update_smw(const Eigen::MatrixXd& p, const Eigen::MatrixXd& grad,
                                         double tau) {
  if (!p.allFinite() || !grad.allFinite() || !std::isfinite(tau))
    throw NumericalError("cayley_update: non-finite input");
  const Eigen::Index r = p.rows();
  const Eigen::Index d = p.cols();
  Eigen::MatrixXd f(r, 2 * d), g(r, 2 * d);
  f << grad, p;
  g << p, -grad;
  const Eigen::MatrixXd m =
      Eigen::MatrixXd::Identity(2 * d, 2 * d) + (tau / 2.0) * (g.transpose() * f);
  return p - tau * (f * m.partialPivLu().solve(g.transpose() * p));
}

// Feasibility-preserving step: SMW form when 2d <= r, else the r x r form.
// Falls back to the refined direct solve if the fast path drifts off the
// manifold (only reachable at extreme step sizes).
inline Eigen::MatrixXd cayley_update(const Eigen::MatrixXd& p, const Eigen::MatrixXd& grad,
                                     double tau) {
  Eigen::MatrixXd next = (2 * p.cols() <= p.rows()) ? cayley_update_smw(p, grad, tau)
                                                    : cayley_update_direct(p, grad, tau);
  if (!(feasibility_error(next) <= 1e-9)) next = cayley_update_direct(p, grad, tau);
  return next;
}

struct BbOptions {
  double tau_min = 1e-10;
  double tau_max = 1e10;
  double tau_fallback = 1e-3;
};

// Barzilai-Borwein step from the secant pair (dP, dF):
//   variant 1: tr(dP^T dP) / |tr(dP^T dF)|
//   variant 2: |tr(dP^T dF)| / tr(dF^T dF)
// Zero denominators fall back to tau_fallback; results are clamped.
inline double bb_step(const Eigen::MatrixXd& dp, const Eigen::MatrixXd& df, int variant,
                      const BbOptions& opts = {}) {
  if (dp.rows() != df.rows() || dp.cols() != df.cols())
    throw std::invalid_argument("bb_step: shape mismatch");
  if (variant != 1 && variant != 2) throw std::invalid_argument("bb_step: variant must be 1 or 2");
  const double cross = std::abs((dp.array() * df.array()).sum());
  double tau;
  if (variant == 1) {
    const double pp = dp.squaredNorm();
    if (cross <= 0.0 || !std::isfinite(cross)) return opts.tau_fallback;
    tau = pp / cross;
  } else {
    const double ff = df.squaredNorm();
    if (ff <= 0.0 || !std::isfinite(ff)) return opts.tau_fallback;
    tau = cross / ff;
  }
  if (!std::isfinite(tau)) return opts.tau_fallback;
  return std::clamp(tau, opts.tau_min, opts.tau_max);
}

struct NonmonotoneConfig {
  double rho = 1e-4;       // sufficient-decrease coefficient
  double delta = 0.5;      // backtracking shrink factor
  double eta = 0.85;       // Zhang-Hager mixing weight
  int max_backtracks = 20;
  double tau_min = 1e-10;
};

// Zhang-Hager averaged reference value C_k; accepts must be fed back so the
// reference tracks the cost sequence.
struct LineSearchState {
  double cost_ref = 0.0;
  double q_accum = 0.0;
  bool initialized = false;

  void reset(double f0) {
    cost_ref = f0;
    q_accum = 1.0;
    initialized = true;
  }
  void absorb(double f, double eta) {
    if (!initialized) {
      reset(f);
      return;
    }
    const double q_next = eta * q_accum + 1.0;
    cost_ref = (eta * q_accum * cost_ref + f) / q_next;
    q_accum = q_next;
  }
};

struct SearchOutcome {
  Eigen::MatrixXd p;
  double tau = 0.0;
  double objective = std::numeric_limits<double>::quiet_NaN();
  int backtracks = 0;
  bool stalled = false;  // every candidate evaluated non-finite
};

// Backtracking search on the Cayley curve: accepts the first candidate with
// f(P+) <= C_k - rho * tau * ||F(P)||_F^2, shrinking tau by delta up to
// max_backtracks and then taking the smallest-tau finite candidate.
inline SearchOutcome nonmonotone_search(const Eigen::MatrixXd& p, const Eigen::MatrixXd& grad,
                                        const std::function<double(const Eigen::MatrixXd&)>& objective,
                                        double tau_init, const LineSearchState& state,
                                        const NonmonotoneConfig& config = {}) {
  SearchOutcome out;
  const Eigen::MatrixXd fgrad = lagrangian_gradient(p, grad);
  const double fnorm_sq = fgrad.squaredNorm();
  if (fnorm_sq == 0.0) {
    out.p = p;
    out.tau = tau_init;
    out.objective = objective(p);
    return out;
  }
  double tau = tau_init;
  bool have_candidate = false;
  for (int attempt = 0;; ++attempt) {
    Eigen::MatrixXd candidate = cayley_update(p, grad, tau);
    const double f = objective(candidate);
    if (std::isfinite(f)) {
      // Overwritten on every finite candidate, so after exhaustion this holds
      // the smallest-tau one, which is then accepted without the decrease test.
      out.p = std::move(candidate);
      out.tau = tau;
      out.objective = f;
      have_candidate = true;
      if (f <= state.cost_ref - config.rho * tau * fnorm_sq) {
        out.backtracks = attempt;
        return out;
      }
    }
    if (attempt >= config.max_backtracks || tau <= config.tau_min) {
      out.backtracks = attempt;
      break;
    }
    tau = std::max(tau * config.delta, config.tau_min);
  }
  if (!have_candidate) {
    out.p = p;
    out.tau = 0.0;
    out.stalled = true;
  }
  return out;
}

}  // namespace film
