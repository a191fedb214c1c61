#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "subpop/linalg.hpp"
#include "subpop/rng.hpp"

using namespace subpop::linalg;

namespace {

DenseMatrix random_symmetric(std::size_t d, std::uint64_t seed) {
  subpop::rng::SplitMix64 gen(seed);
  DenseMatrix a(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) {
      const double v = gen.uniform(-1.0, 1.0);
      a(i, j) = v;
      a(j, i) = v;
    }
  return a;
}

std::vector<double> matvec(const DenseMatrix& a, const std::vector<double>& x) {
  std::vector<double> y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) y[i] += a(i, j) * x[j];
  return y;
}

double norm(const std::vector<double>& x) {
  double s = 0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

// Independent eigenvalue oracle: shift to make the spectrum positive, then
// power iteration with Rayleigh-quotient estimates and deflation, d times.
std::vector<double> power_deflation_eigenvalues(DenseMatrix a, std::uint64_t seed) {
  const std::size_t d = a.rows();
  const double shift = frobenius_norm(a) + 1.0;
  DenseMatrix s = a;
  for (std::size_t i = 0; i < d; ++i) s(i, i) += shift;

  subpop::rng::SplitMix64 gen(seed);
  std::vector<double> values;
  for (std::size_t k = 0; k < d; ++k) {
    std::vector<double> v(d);
    for (double& x : v) x = gen.normal();
    double mu = 0;
    for (int it = 0; it < 5000; ++it) {
      std::vector<double> w = matvec(s, v);
      const double nw = norm(w);
      if (nw == 0.0) break;  // remaining spectrum deflated to zero
      for (double& x : w) x /= nw;
      v = w;
    }
    const std::vector<double> sv = matvec(s, v);
    double num = 0;
    for (std::size_t i = 0; i < d; ++i) num += v[i] * sv[i];
    mu = num;  // Rayleigh quotient, ||v|| = 1
    values.push_back(mu - shift);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) s(i, j) -= mu * v[i] * v[j];
  }
  std::sort(values.begin(), values.end(), std::greater<>());
  return values;
}

DenseMatrix reconstruct(const EigenDecomposition& e) {
  const std::size_t d = e.vectors.rows();
  DenseMatrix lam(d, d);
  for (std::size_t i = 0; i < d; ++i) lam(i, i) = e.values[i];
  return matmul(matmul(e.vectors, lam), transpose(e.vectors));
}

}  // namespace

TEST_CASE("matrix basics") {
  DenseMatrix a(2, 3);
  a(0, 0) = 1;
  a(0, 2) = 2;
  a(1, 1) = -3;
  const DenseMatrix at = transpose(a);
  CHECK(at.rows() == 3);
  CHECK(at(2, 0) == 2);
  CHECK(at(1, 1) == -3);

  const DenseMatrix i3 = DenseMatrix::identity(3);
  const DenseMatrix prod = matmul(a, i3);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(prod(i, j) == a(i, j));

  const DenseMatrix s = scale(a, 2.0);
  CHECK(s(0, 2) == 4);
  const DenseMatrix sum = add(a, a);
  CHECK(sum(1, 1) == -6);

  CHECK(frobenius_norm(a) == doctest::Approx(std::sqrt(1.0 + 4 + 9)));
  CHECK(trace(i3) == 3.0);

  DenseMatrix q(2, 2);
  q(0, 0) = 2;
  q(1, 1) = 3;
  q(0, 1) = q(1, 0) = 1;
  CHECK(quadratic_form(q, {1.0, 2.0}) == doctest::Approx(2 + 4 * 3 + 2 * 2));

  CHECK_THROWS(matmul(a, a));  // 2x3 * 2x3
}

TEST_CASE("sym_eigen identity and diagonal cases") {
  const auto e1 = sym_eigen(DenseMatrix::identity(3));
  for (double v : e1.values) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));

  DenseMatrix diag(2, 2);
  diag(0, 0) = 4;
  diag(1, 1) = 1;
  const auto e2 = sym_eigen(diag);
  CHECK(e2.values[0] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(e2.values[1] == doctest::Approx(1.0).epsilon(1e-12));
  // Axis-aligned eigenvectors: column 0 pairs with eigenvalue 4.
  CHECK(std::abs(e2.vectors(0, 0)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(e2.vectors(1, 1)) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sym_eigen 2x2 with hand-computed spectrum") {
  DenseMatrix a(2, 2);
  a(0, 0) = a(1, 1) = 2;
  a(0, 1) = a(1, 0) = 1;
  const auto e = sym_eigen(a);
  // Characteristic polynomial (2-x)^2 - 1 = 0 -> x in {3, 1}.
  CHECK(e.values[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(e.values[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sym_eigen reconstruction and orthonormality invariants") {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    const DenseMatrix a = random_symmetric(20, seed);
    const auto e = sym_eigen(a);
    const DenseMatrix r = reconstruct(e);
    DenseMatrix diff = add(r, scale(a, -1.0));
    CHECK(frobenius_norm(diff) <= 1e-9 * frobenius_norm(a));
    const DenseMatrix vtv = matmul(transpose(e.vectors), e.vectors);
    DenseMatrix dev = add(vtv, scale(DenseMatrix::identity(20), -1.0));
    CHECK(frobenius_norm(dev) <= 1e-9);
    CHECK(std::is_sorted(e.values.begin(), e.values.end(), std::greater<>()));
  }
}

TEST_CASE("sym_eigen agrees with the power-iteration oracle") {
  for (std::size_t d : {5u, 17u, 30u}) {
    const DenseMatrix a = random_symmetric(d, 100 + d);
    const auto jac = sym_eigen(a);
    const auto oracle = power_deflation_eigenvalues(a, 7);
    for (std::size_t i = 0; i < d; ++i) CHECK(std::abs(jac.values[i] - oracle[i]) <= 1e-6);
  }
}

TEST_CASE("sym_eigen rejects bad input") {
  CHECK_THROWS(sym_eigen(DenseMatrix(2, 3)));
  DenseMatrix asym(2, 2);
  asym(0, 1) = 1.0;
  asym(1, 0) = 2.0;
  CHECK_THROWS(sym_eigen(asym));
}

TEST_CASE("pinv_rank diagonal, zero, and rank-1 cases") {
  DenseMatrix diag(2, 2);
  diag(0, 0) = 2.0;
  const auto p1 = pinv_rank(diag);
  CHECK(p1.rank == 1);
  CHECK(p1.pinv(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p1.pinv(1, 1) == doctest::Approx(0.0));
  CHECK(p1.pinv(0, 1) == doctest::Approx(0.0));

  const auto pz = pinv_rank(DenseMatrix(3, 3));
  CHECK(pz.rank == 0);
  CHECK(frobenius_norm(pz.pinv) == 0.0);

  // v = (2,0,0) has norm 2; pinv(v v^T) = v v^T / ||v||^4 = v v^T / 16.
  DenseMatrix vvt(3, 3);
  vvt(0, 0) = 4.0;
  const auto pr = pinv_rank(vvt);
  CHECK(pr.rank == 1);
  CHECK(pr.pinv(0, 0) == doctest::Approx(4.0 / 16.0).epsilon(1e-12));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      if (i != 0 || j != 0) CHECK(pr.pinv(i, j) == doctest::Approx(0.0));
}

TEST_CASE("pinv_rank Penrose identities and rank counting on random PSD") {
  for (std::uint64_t seed : {21u, 22u}) {
    // PSD with known rank r: B B^T from a d x r factor.
    const std::size_t d = 12, r = 5;
    subpop::rng::SplitMix64 gen(seed);
    DenseMatrix b(d, r);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < r; ++j) b(i, j) = gen.normal();
    const DenseMatrix a = matmul(b, transpose(b));
    const auto p = pinv_rank(a);
    CHECK(p.rank == static_cast<int>(r));

    const DenseMatrix apa = matmul(matmul(a, p.pinv), a);
    DenseMatrix d1 = add(apa, scale(a, -1.0));
    CHECK(frobenius_norm(d1) <= 1e-8 * frobenius_norm(a));

    const DenseMatrix pap = matmul(matmul(p.pinv, a), p.pinv);
    DenseMatrix d2 = add(pap, scale(p.pinv, -1.0));
    CHECK(frobenius_norm(d2) <= 1e-8 * frobenius_norm(p.pinv));
  }
}

TEST_CASE("pinv_rank rejects clearly indefinite matrices") {
  DenseMatrix neg(2, 2);
  neg(0, 0) = 1.0;
  neg(1, 1) = -1.0;
  CHECK_THROWS(pinv_rank(neg));
}
