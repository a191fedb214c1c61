#pragma once

#include <cstddef>
#include <vector>

namespace subpop::linalg {

// Row-major dense matrix of doubles. Small-d workloads only; no views, no
// expression templates, just the handful of operations the project needs.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static DenseMatrix identity(std::size_t n);

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix transpose(const DenseMatrix& a);
DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix scale(const DenseMatrix& a, double s);
double frobenius_norm(const DenseMatrix& a);
double trace(const DenseMatrix& a);

// theta' * A * theta for square A.
double quadratic_form(const DenseMatrix& a, const std::vector<double>& theta);

struct EigenDecomposition {
  std::vector<double> values;  // descending
  DenseMatrix vectors;         // column k pairs with values[k]; orthonormal
};

// Cyclic Jacobi rotations for a real symmetric matrix. Throws on non-square
// input, asymmetry beyond 1e-12 * max|a_ij|, or failure to converge within
// the sweep budget.
EigenDecomposition sym_eigen(const DenseMatrix& a, int max_sweeps = 100);

struct PinvResult {
  DenseMatrix pinv;
  int rank = 0;
};

// Moore-Penrose pseudo-inverse of a symmetric PSD matrix via sym_eigen.
// Eigenvalues at or below eps_rank = d * lambda_max * 2^-52 are treated as
// zero; an eigenvalue below -1e-8 * lambda_max is an error (matrix not PSD).
PinvResult pinv_rank(const DenseMatrix& a);

}  // namespace subpop::linalg
