#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <sstream>
#include <string>
#include <vector>

#include "film/common.hpp"
#include "film/rng.hpp"
#include "film/solver.hpp"
#include "film/triplets.hpp"

namespace film::bench {

// Dense random D x n instance stored sparsely, with D = rank so the thin SVD
// keeps exactly `rank` factors, plus ~4n random triplets.
struct SyntheticInstance {
  FeatureMatrix x;
  TripletSet triplets;
};

inline SyntheticInstance make_instance(int n, int rank, uint64_t seed) {
  Rng rng(derive_seed(seed, 0x62656e63ULL));  // 'benc'
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<size_t>(n) * static_cast<size_t>(rank));
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < rank; ++i) entries.emplace_back(i, j, rng.normal());
  SyntheticInstance inst;
  inst.x.resize(rank, n);
  inst.x.setFromTriplets(entries.begin(), entries.end());
  inst.x.makeCompressed();

  std::vector<Triplet> items;
  items.reserve(static_cast<size_t>(4) * static_cast<size_t>(n));
  for (int t = 0; t < 4 * n; ++t) {
    const int a = static_cast<int>(rng.below(static_cast<uint64_t>(n)));
    int j = static_cast<int>(rng.below(static_cast<uint64_t>(n)));
    while (j == a) j = static_cast<int>(rng.below(static_cast<uint64_t>(n)));
    int k = static_cast<int>(rng.below(static_cast<uint64_t>(n)));
    while (k == a || k == j) k = static_cast<int>(rng.below(static_cast<uint64_t>(n)));
    items.push_back({a, j, k});
  }
  inst.triplets = make_triplet_set(std::move(items));
  return inst;
}

inline CostReport time_fit(int n, int rank, int d, int iters, uint64_t seed) {
  const SyntheticInstance inst = make_instance(n, rank, seed);
  SolverConfig cfg;
  cfg.d = d;
  cfg.max_iters = iters;
  cfg.grad_tol = 0.0;  // never converge early; we want steady iteration timings
  cfg.seed = seed;
  const FitResult res = fit(inst.x, inst.triplets, cfg);
  return per_iteration_costs(res.trace);
}

struct ScalingReport {
  int n_base = 0, n_double = 0, r_lambda = 0, d_lambda = 0;
  double lambda_base_ms = 0.0, lambda_double_ms = 0.0, lambda_ratio = 0.0;
  int n_pfixed = 0, r_p = 0, d_base = 0, d_double = 0;
  double p_base_ms = 0.0, p_double_ms = 0.0, p_ratio = 0.0;
};

// Doubles n at fixed (r, d) for the active-set update, and doubles d at fixed
// (n, r) for the Cayley step, reporting median per-iteration times. Sizes are
// chosen so the timed kernels run for milliseconds rather than microseconds.
inline ScalingReport scaling_study(uint64_t seed = 0, int iters = 31) {
  ScalingReport rep;
  rep.n_base = 12000;
  rep.n_double = 24000;
  rep.r_lambda = 96;
  rep.d_lambda = 12;
  const CostReport lam_a = time_fit(rep.n_base, rep.r_lambda, rep.d_lambda, iters, seed);
  const CostReport lam_b = time_fit(rep.n_double, rep.r_lambda, rep.d_lambda, iters, seed + 1);
  rep.lambda_base_ms = lam_a.median_lambda_ms;
  rep.lambda_double_ms = lam_b.median_lambda_ms;
  rep.lambda_ratio = lam_a.median_lambda_ms > 0.0 ? lam_b.median_lambda_ms / lam_a.median_lambda_ms
                                                  : 0.0;

  rep.n_pfixed = 3000;
  rep.r_p = 512;
  rep.d_base = 48;
  rep.d_double = 96;
  const CostReport p_a = time_fit(rep.n_pfixed, rep.r_p, rep.d_base, iters, seed + 2);
  const CostReport p_b = time_fit(rep.n_pfixed, rep.r_p, rep.d_double, iters, seed + 3);
  rep.p_base_ms = p_a.median_p_ms;
  rep.p_double_ms = p_b.median_p_ms;
  rep.p_ratio = p_a.median_p_ms > 0.0 ? p_b.median_p_ms / p_a.median_p_ms : 0.0;
  return rep;
}

inline std::string format_report(const ScalingReport& r) {
  std::ostringstream out;
  out << "lambda_update: n " << r.n_base << " -> " << r.n_double << " at r=" << r.r_lambda
      << ", d=" << r.d_lambda << ": " << format_g17(r.lambda_base_ms) << " ms -> "
      << format_g17(r.lambda_double_ms) << " ms (ratio " << format_g17(r.lambda_ratio) << ")\n";
  out << "p_update: d " << r.d_base << " -> " << r.d_double << " at n=" << r.n_pfixed
      << ", r=" << r.r_p << ": " << format_g17(r.p_base_ms) << " ms -> "
      << format_g17(r.p_double_ms) << " ms (ratio " << format_g17(r.p_ratio) << ")\n";
  return out.str();
}

}  // namespace film::bench
