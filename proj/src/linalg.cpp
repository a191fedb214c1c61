#include "subpop/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace subpop::linalg {

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions disagree");
  DenseMatrix out(a.rows(), b.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("add: shapes disagree");
  DenseMatrix out = a;
  for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] += b.data()[i];
  return out;
}

DenseMatrix scale(const DenseMatrix& a, double s) {
  DenseMatrix out = a;
  for (double& v : out.data()) v *= s;
  return out;
}

double frobenius_norm(const DenseMatrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

double trace(const DenseMatrix& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("trace: matrix not square");
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) s += a(i, i);
  return s;
}

double quadratic_form(const DenseMatrix& a, const std::vector<double>& theta) {
  if (a.rows() != a.cols() || a.rows() != theta.size())
    throw std::invalid_argument("quadratic_form: shapes disagree");
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) row += a(i, j) * theta[j];
    s += theta[i] * row;
  }
  return s;
}

namespace {

double off_diagonal_norm(const DenseMatrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

}  // namespace

EigenDecomposition sym_eigen(const DenseMatrix& input, int max_sweeps) {
  const std::size_t n = input.rows();
  if (n != input.cols()) throw std::invalid_argument("sym_eigen: matrix not square");

  double max_abs = 0.0;
  for (double v : input.data()) max_abs = std::max(max_abs, std::fabs(v));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::fabs(input(i, j) - input(j, i)) > 1e-12 * std::max(1.0, max_abs))
        throw std::invalid_argument("sym_eigen: matrix not symmetric");

  DenseMatrix a = input;
  DenseMatrix v = DenseMatrix::identity(n);
  const double frob = frobenius_norm(a);
  const double stop = 1e-14 * std::max(1.0, frob);

  bool converged = (n < 2) || off_diagonal_norm(a) <= stop;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::fabs(apq) <= 1e-300) continue;
        const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;

        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
    converged = off_diagonal_norm(a) <= stop;
  }
  if (!converged) throw std::runtime_error("sym_eigen: Jacobi sweeps did not converge");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

  EigenDecomposition out;
  out.values.resize(n);
  out.vectors = DenseMatrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]);
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = v(i, order[k]);
  }
  return out;
}

PinvResult pinv_rank(const DenseMatrix& a) {
  const std::size_t d = a.rows();
  const EigenDecomposition eig = sym_eigen(a);

  double lambda_max = 0.0;
  for (double l : eig.values) lambda_max = std::max(lambda_max, std::fabs(l));
  for (double l : eig.values)
    if (l < -1e-8 * lambda_max)
      throw std::invalid_argument("pinv_rank: matrix has a significant negative eigenvalue (not PSD)");

  const double eps_rank = static_cast<double>(d) * lambda_max * 0x1.0p-52;

  PinvResult out;
  out.pinv = DenseMatrix(d, d, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    const double l = eig.values[k];
    if (l <= eps_rank) continue;
    ++out.rank;
    const double inv = 1.0 / l;
    for (std::size_t i = 0; i < d; ++i) {
      const double vik = eig.vectors(i, k) * inv;
      if (vik == 0.0) continue;
      for (std::size_t j = 0; j < d; ++j) out.pinv(i, j) += vik * eig.vectors(j, k);
    }
  }
  return out;
}

}  // namespace subpop::linalg
