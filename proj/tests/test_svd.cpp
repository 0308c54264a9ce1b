#include <catch2/catch.hpp>
#include <Eigen/Dense>

#include "film/rng.hpp"
#include "film/svd.hpp"

namespace {

Eigen::SparseMatrix<double> random_sparse(int rows, int cols, double density, film::Rng& rng) {
  std::vector<Eigen::Triplet<double>> entries;
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i)
      if (rng.uniform() < density) entries.emplace_back(i, j, rng.normal());
  Eigen::SparseMatrix<double> x(rows, cols);
  x.setFromTriplets(entries.begin(), entries.end());
  return x;
}

}  // namespace

TEST_CASE("thin_svd of the identity") {
  Eigen::SparseMatrix<double> x(3, 3);
  x.setIdentity();
  const auto f = film::thin_svd(x);
  REQUIRE(f.rank == 3);
  for (int i = 0; i < 3; ++i) CHECK(f.sigma[i] == Approx(1.0).margin(1e-12));
  CHECK((f.U * f.sigma.asDiagonal() * f.V.transpose() - Eigen::MatrixXd::Identity(3, 3)).norm() <=
        1e-12);
}

TEST_CASE("thin_svd detects exact rank deficiency") {
  film::Rng rng(5);
  Eigen::MatrixXd dense(6, 4);
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 6; ++i) dense(i, j) = rng.normal();
  dense.col(3) = dense.col(1);  // duplicated column
  const auto f = film::thin_svd(dense.sparseView());
  CHECK(f.rank == 3);
}

TEST_CASE("thin_svd rejects the zero matrix") {
  Eigen::SparseMatrix<double> x(4, 4);
  CHECK_THROWS_AS(film::thin_svd(x), film::DataError);
}

TEST_CASE("thin_svd satisfies the reconstruction bound against an independent route") {
  film::Rng rng(17);
  const auto x = random_sparse(50, 20, 0.25, rng);
  const auto f = film::thin_svd(x, 1e-10);
  const Eigen::MatrixXd dense(x);

  CHECK((dense - f.U * f.sigma.asDiagonal() * f.V.transpose()).norm() <= 1e-6 * dense.norm());
  CHECK((f.U.transpose() * f.U - Eigen::MatrixXd::Identity(f.rank, f.rank)).norm() <= 1e-8);
  CHECK((f.V.transpose() * f.V - Eigen::MatrixXd::Identity(f.rank, f.rank)).norm() <= 1e-8);
  for (Eigen::Index i = 0; i + 1 < f.rank; ++i) CHECK(f.sigma[i] >= f.sigma[i + 1]);
  CHECK(f.sigma[f.rank - 1] > 0.0);

  // Independent spectrum: eigenvalues of the Gram matrix.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(dense.transpose() * dense);
  Eigen::VectorXd gram_sv = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().reverse();
  for (Eigen::Index i = 0; i < f.rank; ++i)
    CHECK(f.sigma[i] == Approx(gram_sv[i]).margin(1e-8 * gram_sv[0]));
}

TEST_CASE("truncated_svd recovers a low-rank matrix within the rank budget") {
  film::Rng rng(23);
  const int dim = 120, n = 90, true_rank = 12;
  Eigen::MatrixXd a(dim, true_rank), b(true_rank, n);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < true_rank; ++j) a(i, j) = rng.normal();
  for (int i = 0; i < true_rank; ++i)
    for (int j = 0; j < n; ++j) b(i, j) = rng.normal();
  const Eigen::MatrixXd dense = a * b;
  const Eigen::SparseMatrix<double> x = dense.sparseView();

  const auto f = film::truncated_svd(x, 20, 1e-10, 99);
  CHECK(f.rank == true_rank);
  CHECK((dense - f.U * f.sigma.asDiagonal() * f.V.transpose()).norm() <= 1e-6 * dense.norm());
  CHECK((f.U.transpose() * f.U - Eigen::MatrixXd::Identity(f.rank, f.rank)).norm() <= 1e-8);
  CHECK((f.V.transpose() * f.V - Eigen::MatrixXd::Identity(f.rank, f.rank)).norm() <= 1e-8);

  // Same seed, same factors.
  const auto g = film::truncated_svd(x, 20, 1e-10, 99);
  CHECK((f.U - g.U).norm() == 0.0);
  CHECK((f.V - g.V).norm() == 0.0);

  // Budget below the true rank caps the factorization.
  const auto h = film::truncated_svd(x, 5, 1e-10, 99);
  CHECK(h.rank == 5);
}
