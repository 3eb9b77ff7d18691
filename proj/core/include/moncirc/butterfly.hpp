#pragma once

// Butterfly factor matrices and their dense-tensor (Monarch) form.

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "moncirc/monarch.hpp"

namespace moncirc {

/// Dense tensor with `order` binary axes, stored row-major (first axis most significant).
struct BinaryTensor {
  std::size_t order = 0;
  std::vector<double> values;  // 2^order entries

  static BinaryTensor zeros(std::size_t order);
  double operator()(std::span<const std::size_t> index) const;
  double& operator()(std::span<const std::size_t> index);
};

/// Sparse D x D butterfly factor B(i, D), D = 2^d. Every position of the
/// butterfly pattern is stored structurally, even when its value is zero.
struct ButterflyFactorMatrix {
  std::size_t index = 0;  // i in [1, d]
  std::size_t size = 0;   // D
  Eigen::SparseMatrix<double, Eigen::RowMajor> matrix;

  std::size_t structural_nonzeros() const { return static_cast<std::size_t>(matrix.nonZeros()); }
};

/// True iff (row, col) lies on the B(i, D) pattern: block-diagonal with blocks of
/// size D / 2^{i-1}, each nonzero only on the diagonals of its four quadrants.
bool butterfly_pattern_contains(std::size_t i, std::size_t size, std::size_t row, std::size_t col);

/// i-th butterfly unfurling of a (d+1)-axis binary tensor:
///   B[j_1..j_d, j'_1..j'_d] = A[j_i, j_1..j_{i-1}, j_{i+1}..j_d, j'_i] * prod_{c != i} delta(j_c, j'_c)
/// with j_1 the most significant bit. i is 1-based.
ButterflyFactorMatrix butterfly_unfurl(const BinaryTensor& a, std::size_t i);

/// Product B(1, D) B(2, D) ... B(d, D) of the unfurled factors, as a dense matrix.
Eigen::MatrixXd butterfly_product(std::span<const BinaryTensor> factors);

/// Depth-d Monarch factorization (all dims 2) equivalent to the butterfly matrix
/// built from factors[0..d-1].
///
/// The Monarch layers contract the least significant butterfly bit first, so with
/// row-major (first index most significant) flattening the materialized Monarch
/// matrix M relates to the butterfly matrix by bit reversal: B = P M P, where P
/// reverses the d-bit index. materialize_butterfly() applies that relabeling.
MonarchFactorization butterfly_as_monarch(std::span<const BinaryTensor> factors);

/// Index permutation reversing the bit order of d-bit integers.
std::vector<std::size_t> bit_reversal(std::size_t bits);

/// P * materialize(fact) * P for a depth-d factorization with all dims 2.
Eigen::MatrixXd materialize_butterfly(const MonarchFactorization& fact);

}  // namespace moncirc
