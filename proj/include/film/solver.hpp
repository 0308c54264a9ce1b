#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "film/common.hpp"
#include "film/rng.hpp"
#include "film/stiefel.hpp"
#include "film/svd.hpp"
#include "film/triplets.hpp"
#include "film/vectorizer.hpp"

namespace film {

// Learns a low-rank map L (d x D) from triplet constraints by alternating
//   [active set] -> [working matrix K] -> [Cayley/BB step on P] -> [scales s]
// over the Stiefel factorization of the Gram matrix of the representation:
// with X = U diag(sigma) V^T, the representation is Y = sqrt(S) P^T V^T and
// the recovered map is L = sqrt(S) P^T diag(sigma)^{-1} U^T.

// Smooth surrogate for max(0, x): log(1 + exp(x)), overflow-safe.
inline double smooth_hinge(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct SolverConfig {
  int d = 16;                  // target representation dimension
  double margin = 1.0;         // hinge margin m
  int max_iters = 500;
  double grad_tol = 1e-4;      // epsilon on ||F(P)||_F
  double rank_tol = 1e-10;     // relative singular value cutoff
  uint64_t seed = 0;
  int batch_size = 0;          // minibatch size; <= 0 means full batch
  int epochs = 1;              // minibatch epochs
  int max_rank = 0;            // > 0 switches to randomized truncated SVD
  BbOptions bb;
  NonmonotoneConfig search;
};

// Columns of the constant matrix V^T C T that can be nonzero, i.e. one column
// per anchor. Everything downstream iterates anchors only, so no n x n
// product is ever formed.
struct AnchorColumns {
  std::vector<int> anchors;  // sample index per stored column, ascending
  Eigen::MatrixXd cols;      // r x |anchors|
};

inline AnchorColumns build_anchor_columns(const Eigen::MatrixXd& v,
                                          const Eigen::SparseMatrix<double>& c,
                                          const Eigen::VectorXd& t_weights) {
  const Eigen::Index r = v.cols();
  AnchorColumns w;
  for (int col = 0; col < c.outerSize(); ++col) {
    if (Eigen::SparseMatrix<double>::InnerIterator(c, col)) w.anchors.push_back(col);
  }
  w.cols.resize(r, static_cast<Eigen::Index>(w.anchors.size()));
  for (size_t j = 0; j < w.anchors.size(); ++j) {
    const int col = w.anchors[j];
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(r);
    for (Eigen::SparseMatrix<double>::InnerIterator it(c, col); it; ++it) {
      acc += it.value() * v.row(it.row()).transpose();
    }
    w.cols.col(static_cast<Eigen::Index>(j)) = t_weights[col] * acc;
  }
  return w;
}

struct ActiveSet {
  Eigen::VectorXd z;             // margin terms, zero for non-anchors
  std::vector<uint8_t> active;   // lambda(z_i + m)
  long active_count = 0;
};

// z_i = -(V P S P^T V^T C T)_{ii}, assembled as (V P) S (P^T W) column by
// column; cost O(n r d) plus O(r d) per anchor.
inline ActiveSet update_active_set(const Eigen::MatrixXd& p, const Eigen::VectorXd& s,
                                   const Eigen::MatrixXd& v, const AnchorColumns& w,
                                   double margin) {
  const Eigen::Index n = v.rows();
  ActiveSet as;
  as.z = Eigen::VectorXd::Zero(n);
  const Eigen::MatrixXd vp = v * p;                      // n x d
  const Eigen::MatrixXd pw = p.transpose() * w.cols;     // d x |anchors|
  for (size_t j = 0; j < w.anchors.size(); ++j) {
    const int i = w.anchors[j];
    as.z[i] = -(vp.row(i).transpose().cwiseProduct(s))
                   .dot(pw.col(static_cast<Eigen::Index>(j)));
  }
  as.active.assign(static_cast<size_t>(n), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (as.z[i] + margin > 0.0) {
      as.active[static_cast<size_t>(i)] = 1;
      ++as.active_count;
    }
  }
  return as;
}

// Spec-shaped overload taking the raw constraint matrix.
inline ActiveSet update_active_set(const Eigen::MatrixXd& p, const Eigen::VectorXd& s,
                                   const Eigen::MatrixXd& v, const Eigen::SparseMatrix<double>& c,
                                   const Eigen::VectorXd& t_weights, double margin) {
  return update_active_set(p, s, v, build_anchor_columns(v, c, t_weights), margin);
}

// K = -V^T C T Lambda V, restricted to active anchor columns.
inline Eigen::MatrixXd update_working_matrix(const Eigen::MatrixXd& v, const AnchorColumns& w,
                                             const std::vector<uint8_t>& active) {
  const Eigen::Index r = v.cols();
  std::vector<Eigen::Index> keep;
  for (size_t j = 0; j < w.anchors.size(); ++j) {
    if (active[static_cast<size_t>(w.anchors[j])]) keep.push_back(static_cast<Eigen::Index>(j));
  }
  if (keep.empty()) return Eigen::MatrixXd::Zero(r, r);
  Eigen::MatrixXd wa(r, static_cast<Eigen::Index>(keep.size()));
  Eigen::MatrixXd va(static_cast<Eigen::Index>(keep.size()), r);
  for (size_t j = 0; j < keep.size(); ++j) {
    wa.col(static_cast<Eigen::Index>(j)) = w.cols.col(keep[j]);
    va.row(static_cast<Eigen::Index>(j)) = v.row(w.anchors[static_cast<size_t>(keep[j])]);
  }
  return -(wa * va);
}

inline Eigen::MatrixXd update_working_matrix(const Eigen::MatrixXd& v,
                                             const Eigen::SparseMatrix<double>& c,
                                             const Eigen::VectorXd& t_weights,
                                             const std::vector<uint8_t>& active) {
  return update_working_matrix(v, build_anchor_columns(v, c, t_weights), active);
}

// k_i = -p_i^T K p_i for each column of P.
inline Eigen::VectorXd curvature_values(const Eigen::MatrixXd& p, const Eigen::MatrixXd& k) {
  const Eigen::MatrixXd kp = k * p;
  Eigen::VectorXd kv(p.cols());
  for (Eigen::Index i = 0; i < p.cols(); ++i) kv[i] = -p.col(i).dot(kp.col(i));
  return kv;
}

// f2(P) = -1/2 sum_i k_i mu(k_i) + m * tr(Lambda), the smoothed objective.
inline double objective_f2(const Eigen::MatrixXd& p, const Eigen::MatrixXd& k,
                           double lambda_trace, double margin) {
  if (!k.allFinite()) throw NumericalError("objective_f2: non-finite working matrix");
  const Eigen::VectorXd kv = curvature_values(p, k);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < kv.size(); ++i) acc += kv[i] * smooth_hinge(kv[i]);
  return -0.5 * acc + margin * lambda_trace;
}

// Unsmoothed counterpart -1/2 sum_i k_i max(0, k_i) + m tr(Lambda); exposed
// for diagnostics and for the oracle cross-checks.
inline double objective_f1(const Eigen::MatrixXd& p, const Eigen::MatrixXd& k,
                           double lambda_trace, double margin) {
  const Eigen::VectorXd kv = curvature_values(p, k);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < kv.size(); ++i) acc += kv[i] * std::max(0.0, kv[i]);
  return -0.5 * acc + margin * lambda_trace;
}

// grad f2(P) = -(K + K^T) P diag(q), q_i = -1/2 (mu(k_i) + k_i sigma(k_i)).
// Lambda (hence K) is held fixed while differentiating.
inline Eigen::MatrixXd gradient_f2(const Eigen::MatrixXd& p, const Eigen::MatrixXd& k) {
  if (k.rows() != p.rows() || k.cols() != p.rows())
    throw std::invalid_argument("gradient_f2: shape mismatch");
  const Eigen::VectorXd kv = curvature_values(p, k);
  Eigen::VectorXd q(kv.size());
  for (Eigen::Index i = 0; i < kv.size(); ++i)
    q[i] = -0.5 * (smooth_hinge(kv[i]) + kv[i] * sigmoid(kv[i]));
  return -((k + k.transpose()) * p) * q.asDiagonal();
}

// s_i* = max(0, -p_i^T K p_i), the closed-form scale minimizer.
inline Eigen::VectorXd closed_form_scales(const Eigen::MatrixXd& p, const Eigen::MatrixXd& k) {
  return curvature_values(p, k).cwiseMax(0.0);
}

struct TraceRow {
  int iter = 0;
  double f2 = 0.0;
  double grad_norm = 0.0;
  double tau = 0.0;
  double active_count = 0.0;
  double ms = 0.0;
  // Per-phase wall times (filled when timing is enabled) and diagnostics.
  double ms_lambda = 0.0, ms_k = 0.0, ms_grad = 0.0, ms_p = 0.0, ms_s = 0.0;
  double feasibility = 0.0;
  int backtracks = 0;
};

using TrainingTrace = std::vector<TraceRow>;

struct MetricMap {
  Eigen::MatrixXd L;  // d x D
};

enum class FitStatus { converged, max_iters_reached, diverged, stalled };

struct FitResult {
  MetricMap map;
  TrainingTrace trace;
  FitStatus status = FitStatus::max_iters_reached;
  int iterations = 0;
  Eigen::MatrixXd P;     // final Stiefel point, r x d
  Eigen::VectorXd s;     // final scales
  Eigen::Index rank = 0;
  size_t peak_anchor_bytes = 0;  // largest anchor-column block held at once
};

namespace detail {

struct SolverState {
  Eigen::MatrixXd p;
  Eigen::VectorXd s;
  Eigen::MatrixXd prev_p;
  Eigen::MatrixXd prev_f;
  bool have_prev = false;
  int bb_uses = 0;
  LineSearchState search;
  int iter = 0;
};

inline double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

// One full [Lambda, K, grad, P, s] cycle against the given anchor columns.
// Returns true when the outer loop should stop.
inline bool solver_step(SolverState& st, const Eigen::MatrixXd& v, const AnchorColumns& w,
                        const SolverConfig& cfg, TrainingTrace& trace, FitStatus& status) {
  using clock = std::chrono::steady_clock;
  TraceRow row;
  row.iter = st.iter;
  const auto t_start = clock::now();

  auto t0 = clock::now();
  const ActiveSet as = update_active_set(st.p, st.s, v, w, cfg.margin);
  row.ms_lambda = ms_since(t0);
  row.active_count = static_cast<double>(as.active_count);

  t0 = clock::now();
  const Eigen::MatrixXd k = update_working_matrix(v, w, as.active);
  row.ms_k = ms_since(t0);

  t0 = clock::now();
  const double lambda_trace = static_cast<double>(as.active_count);
  const Eigen::VectorXd kv = curvature_values(st.p, k);
  double f2 = 0.0;
  for (Eigen::Index i = 0; i < kv.size(); ++i) f2 += kv[i] * smooth_hinge(kv[i]);
  f2 = -0.5 * f2 + cfg.margin * lambda_trace;
  row.f2 = f2;
  if (!std::isfinite(f2)) {
    row.ms = ms_since(t_start);
    trace.push_back(row);
    status = FitStatus::diverged;
    return true;
  }
  const Eigen::MatrixXd grad = gradient_f2(st.p, k);
  const Eigen::MatrixXd fgrad = lagrangian_gradient(st.p, grad);
  row.grad_norm = fgrad.norm();
  row.ms_grad = ms_since(t0);
  row.feasibility = feasibility_error(st.p);

  st.search.absorb(f2, cfg.search.eta);

  if (row.grad_norm < cfg.grad_tol) {
    st.s = kv.cwiseMax(0.0);
    row.ms = ms_since(t_start);
    trace.push_back(row);
    status = FitStatus::converged;
    return true;
  }

  t0 = clock::now();
  double tau = cfg.bb.tau_fallback;
  if (st.have_prev) {
    const int variant = (st.bb_uses % 2 == 0) ? 1 : 2;  // alternate tau_1 / tau_2
    tau = bb_step(st.p - st.prev_p, fgrad - st.prev_f, variant, cfg.bb);
    ++st.bb_uses;
    // A floor-clamped step means the secant pair is degenerate (P barely
    // moved while the active set flipped); re-seed instead of freezing.
    if (tau <= cfg.bb.tau_min) tau = cfg.bb.tau_fallback;
  }
  const auto objective = [&](const Eigen::MatrixXd& cand) {
    return objective_f2(cand, k, lambda_trace, cfg.margin);
  };
  const SearchOutcome step = nonmonotone_search(st.p, grad, objective, tau, st.search, cfg.search);
  row.ms_p = ms_since(t0);
  row.tau = step.tau;
  row.backtracks = step.backtracks;
  if (step.stalled) {
    row.ms = ms_since(t_start);
    trace.push_back(row);
    status = FitStatus::stalled;
    return true;
  }
  st.prev_p = st.p;
  st.prev_f = fgrad;
  st.have_prev = true;
  st.p = step.p;

  t0 = clock::now();
  st.s = closed_form_scales(st.p, k);
  row.ms_s = ms_since(t0);

  row.ms = ms_since(t_start);
  trace.push_back(row);
  ++st.iter;
  return false;
}

inline SvdFactors decompose(const FeatureMatrix& x, const SolverConfig& cfg) {
  SvdFactors svd = cfg.max_rank > 0
                       ? truncated_svd(x, cfg.max_rank, cfg.rank_tol, derive_seed(cfg.seed, 0x72616e6bULL))
                       : thin_svd(x, cfg.rank_tol);
  if (svd.rank < cfg.d) {
    throw DataError("effective rank r=" + std::to_string(svd.rank) + " is below d=" +
                    std::to_string(cfg.d) + "; choose a smaller d");
  }
  return svd;
}

inline FitResult finish(const SvdFactors& svd, SolverState&& st, TrainingTrace&& trace,
                        FitStatus status) {
  FitResult res;
  res.P = std::move(st.p);
  res.s = std::move(st.s);
  res.rank = svd.rank;
  res.trace = std::move(trace);
  res.status = status;
  res.iterations = static_cast<int>(res.trace.size());
  // L = sqrt(S) P^T Sigma^{-1} U^T
  res.map.L = (res.s.cwiseSqrt().asDiagonal() * res.P.transpose()) *
              (svd.sigma.cwiseInverse().asDiagonal() * svd.U.transpose());
  return res;
}

}  // namespace detail

// Full-batch training (Algorithm: SVD once, constant V^T C T, then the
// alternating cycle until ||F(P)|| < grad_tol or max_iters).
inline FitResult fit(const FeatureMatrix& x, const TripletSet& ts, const SolverConfig& cfg) {
  if (ts.empty()) throw DataError("fit: empty triplet set");
  const SvdFactors svd = detail::decompose(x, cfg);
  const int n = static_cast<int>(x.cols());
  const auto c = build_constraint_matrix(ts, n);
  const Eigen::VectorXd tw = build_anchor_weights(ts, n);
  const AnchorColumns w = build_anchor_columns(svd.V, c, tw);

  detail::SolverState st;
  Rng init_rng(cfg.seed);
  st.p = random_stiefel(svd.rank, cfg.d, init_rng);
  st.s = Eigen::VectorXd::Ones(cfg.d);

  TrainingTrace trace;
  FitStatus status = FitStatus::max_iters_reached;
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    if (detail::solver_step(st, svd.V, w, cfg, trace, status)) break;
  }
  FitResult res = detail::finish(svd, std::move(st), std::move(trace), status);
  res.peak_anchor_bytes = sizeof(double) * static_cast<size_t>(w.cols.size());
  return res;
}

// Minibatch variant: each epoch shuffles the triplets (seeded), partitions
// them into batches, and runs one full cycle per batch with that batch's
// constraint matrix and anchor weights over the fixed global V. With
// batch_size >= |T| and one epoch this reproduces one iteration of fit
// exactly.
inline FitResult fit_minibatch(const FeatureMatrix& x, const TripletSet& ts,
                               const SolverConfig& cfg) {
  if (ts.empty()) throw DataError("fit_minibatch: empty triplet set");
  if (cfg.batch_size < 1) throw std::invalid_argument("fit_minibatch: batch_size must be >= 1");
  const SvdFactors svd = detail::decompose(x, cfg);
  const int n = static_cast<int>(x.cols());

  detail::SolverState st;
  Rng init_rng(cfg.seed);
  st.p = random_stiefel(svd.rank, cfg.d, init_rng);
  st.s = Eigen::VectorXd::Ones(cfg.d);

  Rng shuffle_rng(derive_seed(cfg.seed, 0x73687566ULL));  // 'shuf'
  std::vector<size_t> order(ts.size());
  TrainingTrace trace;
  FitStatus status = FitStatus::max_iters_reached;
  size_t peak_bytes = 0;
  bool stop = false;
  for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
    std::iota(order.begin(), order.end(), size_t{0});
    shuffle_rng.shuffle(order);
    for (size_t start = 0; start < order.size() && !stop; start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<Triplet> batch_items;
      batch_items.reserve(end - start);
      for (size_t idx = start; idx < end; ++idx) batch_items.push_back(ts.items[order[idx]]);
      const TripletSet batch = make_triplet_set(std::move(batch_items));
      const auto c_b = build_constraint_matrix(batch, n);
      const Eigen::VectorXd tw_b = build_anchor_weights(batch, n);
      const AnchorColumns w_b = build_anchor_columns(svd.V, c_b, tw_b);
      peak_bytes = std::max(peak_bytes, sizeof(double) * static_cast<size_t>(w_b.cols.size()));
      stop = detail::solver_step(st, svd.V, w_b, cfg, trace, status);
    }
  }
  FitResult res = detail::finish(svd, std::move(st), std::move(trace), status);
  res.peak_anchor_bytes = peak_bytes;
  return res;
}

// Aggregated wall-time report over a trace (medians per update kind).
struct CostReport {
  size_t iterations = 0;
  double median_lambda_ms = 0.0;
  double median_k_ms = 0.0;
  double median_grad_ms = 0.0;
  double median_p_ms = 0.0;
  double median_s_ms = 0.0;
  double median_total_ms = 0.0;
};

inline CostReport per_iteration_costs(const TrainingTrace& trace) {
  CostReport report;
  report.iterations = trace.size();
  if (trace.empty()) return report;
  auto median_of = [&](auto accessor) {
    std::vector<double> vals;
    vals.reserve(trace.size());
    for (const auto& row : trace) vals.push_back(accessor(row));
    std::sort(vals.begin(), vals.end());
    const size_t mid = vals.size() / 2;
    return vals.size() % 2 == 1 ? vals[mid] : 0.5 * (vals[mid - 1] + vals[mid]);
  };
  report.median_lambda_ms = median_of([](const TraceRow& r) { return r.ms_lambda; });
  report.median_k_ms = median_of([](const TraceRow& r) { return r.ms_k; });
  report.median_grad_ms = median_of([](const TraceRow& r) { return r.ms_grad; });
  report.median_p_ms = median_of([](const TraceRow& r) { return r.ms_p; });
  report.median_s_ms = median_of([](const TraceRow& r) { return r.ms_s; });
  report.median_total_ms = median_of([](const TraceRow& r) { return r.ms; });
  return report;
}

}  // namespace film
