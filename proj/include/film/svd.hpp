#pragma once

#include <Eigen/Dense>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <Eigen/SparseCore>
#include <cstdint>
#include <string>

#include "film/common.hpp"
#include "film/rng.hpp"

namespace film {

// Thin SVD X = U diag(sigma) V^T truncated to the effective rank.
struct SvdFactors {
  Eigen::MatrixXd U;       // D x r
  Eigen::VectorXd sigma;   // r, strictly positive, descending
  Eigen::MatrixXd V;       // n x r
  Eigen::Index rank = 0;
};

namespace detail {
// Dense decompositions above this edge are refused; callers should switch to
// truncated_svd with an explicit rank budget instead.
inline constexpr Eigen::Index kDenseSvdLimit = 4096;

inline SvdFactors truncate_factors(const Eigen::MatrixXd& u, const Eigen::VectorXd& sv,
                                   const Eigen::MatrixXd& v, double rank_tol,
                                   Eigen::Index max_rank) {
  const double cutoff = rank_tol * sv[0];
  Eigen::Index r = 0;
  while (r < sv.size() && sv[r] > cutoff) ++r;
  if (max_rank > 0) r = std::min(r, max_rank);
  SvdFactors f;
  f.rank = r;
  f.U = u.leftCols(r);
  f.sigma = sv.head(r);
  f.V = v.leftCols(r);
  return f;
}
}  // namespace detail

// Exact thin SVD of a sparse matrix via a dense decomposition. Intended for
// desk-scale inputs; refuses matrices whose short side exceeds an internal
// limit (use truncated_svd there).
inline SvdFactors thin_svd(const Eigen::SparseMatrix<double>& x, double rank_tol = 1e-10) {
  if (x.nonZeros() == 0) throw DataError("thin_svd: matrix is all zero");
  const Eigen::Index short_side = std::min(x.rows(), x.cols());
  if (short_side > detail::kDenseSvdLimit)
    throw DataError("thin_svd: matrix too large for a dense decomposition; use truncated_svd");
  Eigen::MatrixXd dense(x);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(dense, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return detail::truncate_factors(svd.matrixU(), svd.singularValues(), svd.matrixV(), rank_tol, 0);
}

// Randomized truncated SVD (range finder with power iterations). Produces at
// most max_rank factors; deterministic for a fixed seed.
inline SvdFactors truncated_svd(const Eigen::SparseMatrix<double>& x, Eigen::Index max_rank,
                                double rank_tol = 1e-10, uint64_t seed = 0,
                                Eigen::Index oversample = 10, int power_iters = 2) {
  if (x.nonZeros() == 0) throw DataError("truncated_svd: matrix is all zero");
  if (max_rank < 1) throw std::invalid_argument("truncated_svd: max_rank must be >= 1");
  const Eigen::Index short_side = std::min(x.rows(), x.cols());
  const Eigen::Index k = std::min(max_rank + oversample, short_side);

  Rng rng(derive_seed(seed, 0x53564453ULL));  // 'SVDS'
  Eigen::MatrixXd omega(x.cols(), k);
  for (Eigen::Index j = 0; j < k; ++j)
    for (Eigen::Index i = 0; i < x.cols(); ++i) omega(i, j) = rng.normal();

  auto orthonormalize = [](Eigen::MatrixXd m) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    return Eigen::MatrixXd(qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), m.cols()));
  };

  Eigen::MatrixXd q = orthonormalize(x * omega);  // D x k
  for (int t = 0; t < power_iters; ++t) {
    Eigen::MatrixXd z = orthonormalize(x.transpose() * q);  // n x k
    q = orthonormalize(x * z);
  }
  Eigen::MatrixXd b = q.transpose() * x;  // k x n
  Eigen::BDCSVD<Eigen::MatrixXd> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::MatrixXd u = q * svd.matrixU();
  return detail::truncate_factors(u, svd.singularValues(), svd.matrixV(), rank_tol, max_rank);
}

}  // namespace film
