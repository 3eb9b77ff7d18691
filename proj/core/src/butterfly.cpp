#include "moncirc/butterfly.hpp"

#include <string>

#include "moncirc/error.hpp"

namespace moncirc {

BinaryTensor BinaryTensor::zeros(std::size_t order) {
  return BinaryTensor{order, std::vector<double>(std::size_t{1} << order, 0.0)};
}

namespace {

std::size_t flat_index(std::size_t order, std::span<const std::size_t> index) {
  require(index.size() == order, ErrorKind::Dimension, "binary tensor index has wrong arity");
  std::size_t flat = 0;
  for (std::size_t b : index) flat = (flat << 1) | (b & 1u);
  return flat;
}

// Bit c (1-based, c = 1 most significant) of a d-bit integer.
std::size_t bit(std::size_t value, std::size_t c, std::size_t d) { return (value >> (d - c)) & 1u; }

}  // namespace

double BinaryTensor::operator()(std::span<const std::size_t> index) const {
  return values[flat_index(order, index)];
}

double& BinaryTensor::operator()(std::span<const std::size_t> index) {
  return values[flat_index(order, index)];
}

bool butterfly_pattern_contains(std::size_t i, std::size_t size, std::size_t row, std::size_t col) {
  std::size_t d = 0;
  while ((std::size_t{1} << d) < size) ++d;
  for (std::size_t c = 1; c <= d; ++c) {
    if (c != i && bit(row, c, d) != bit(col, c, d)) return false;
  }
  return true;
}

ButterflyFactorMatrix butterfly_unfurl(const BinaryTensor& a, std::size_t i) {
  require(a.order >= 2 && a.values.size() == (std::size_t{1} << a.order), ErrorKind::Dimension,
          "butterfly_unfurl: tensor must have >= 2 binary axes");
  const std::size_t d = a.order - 1;
  require(i >= 1 && i <= d, ErrorKind::Domain,
          "butterfly_unfurl: layer index " + std::to_string(i) + " outside [1, " +
              std::to_string(d) + "]");
  const std::size_t size = std::size_t{1} << d;
  ButterflyFactorMatrix out;
  out.index = i;
  out.size = size;
  out.matrix.resize(static_cast<Eigen::Index>(size), static_cast<Eigen::Index>(size));
  out.matrix.reserve(Eigen::VectorXi::Constant(static_cast<Eigen::Index>(size), 2));

  std::vector<std::size_t> idx(a.order);
  for (std::size_t row = 0; row < size; ++row) {
    // Only bit i of the column may differ from the row.
    for (std::size_t ji2 = 0; ji2 < 2; ++ji2) {
      const std::size_t shift = d - i;
      const std::size_t col = (row & ~(std::size_t{1} << shift)) | (ji2 << shift);
      std::size_t k = 0;
      idx[k++] = bit(row, i, d);
      for (std::size_t c = 1; c <= d; ++c) {
        if (c != i) idx[k++] = bit(row, c, d);
      }
      idx[k] = ji2;
      out.matrix.insert(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) = a(idx);
    }
  }
  out.matrix.makeCompressed();
  return out;
}

Eigen::MatrixXd butterfly_product(std::span<const BinaryTensor> factors) {
  require(!factors.empty(), ErrorKind::Dimension, "butterfly_product: no factors");
  const std::size_t d = factors.size();
  for (const auto& f : factors) {
    require(f.order == d + 1, ErrorKind::Dimension,
            "butterfly_product: every factor needs d+1 binary axes");
  }
  const auto size = static_cast<Eigen::Index>(std::size_t{1} << d);
  Eigen::MatrixXd acc = Eigen::MatrixXd::Identity(size, size);
  for (std::size_t i = 1; i <= d; ++i) {
    const auto b = butterfly_unfurl(factors[i - 1], i);
    acc = acc * b.matrix;
  }
  return acc;
}

MonarchFactorization butterfly_as_monarch(std::span<const BinaryTensor> factors) {
  const std::size_t d = factors.size();
  require(d >= 1, ErrorKind::Dimension, "butterfly_as_monarch: no factors");
  for (const auto& f : factors) {
    require(f.order == d + 1 && f.values.size() == (std::size_t{1} << (d + 1)),
            ErrorKind::Dimension, "butterfly_as_monarch: every factor needs d+1 binary axes");
  }
  std::vector<std::size_t> twos(d, 2);
  MonarchFactorization fact(twos, twos);
  std::vector<std::size_t> idx(d + 1);
  for (std::size_t t = 0; t < d; ++t) {
    const BinaryTensor& a = factors[d - 1 - t];
    const std::size_t batch = fact.layer_batch(t);
    for (std::size_t r = 0; r < batch; ++r) {
      // r encodes (i_{t+1}, ..., i_{d-1}, j_0, ..., j_{t-1}), first most significant.
      std::vector<std::size_t> bits(d - 1);
      for (std::size_t k = d - 1, rem = r; k-- > 0;) {
        bits[k] = rem & 1u;
        rem >>= 1;
      }
      const std::size_t n_in_tail = d - 1 - t;  // i_{t+1}..i_{d-1}
      for (std::size_t j = 0; j < 2; ++j) {
        for (std::size_t i = 0; i < 2; ++i) {
          // A(d-t)[j, i_{d-1}, ..., i_{t+1}, j_{t-1}, ..., j_0, i]
          std::size_t k = 0;
          idx[k++] = j;
          for (std::size_t s = n_in_tail; s-- > 0;) idx[k++] = bits[s];
          for (std::size_t s = d - 1; s-- > n_in_tail;) idx[k++] = bits[s];
          idx[k] = i;
          fact.at(t, j, i, r) = a(idx);
        }
      }
    }
  }
  return fact;
}

std::vector<std::size_t> bit_reversal(std::size_t bits) {
  const std::size_t n = std::size_t{1} << bits;
  std::vector<std::size_t> perm(n);
  for (std::size_t v = 0; v < n; ++v) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < bits; ++b) r |= ((v >> b) & 1u) << (bits - 1 - b);
    perm[v] = r;
  }
  return perm;
}

Eigen::MatrixXd materialize_butterfly(const MonarchFactorization& fact) {
  for (std::size_t t = 0; t < fact.depth(); ++t) {
    require(fact.layer_in(t) == 2 && fact.layer_out(t) == 2, ErrorKind::Dimension,
            "materialize_butterfly: every layer must be 2x2");
  }
  const Eigen::MatrixXd m = materialize(fact).w;
  const auto perm = bit_reversal(fact.depth());
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      out(r, c) = m(static_cast<Eigen::Index>(perm[static_cast<std::size_t>(r)]),
                    static_cast<Eigen::Index>(perm[static_cast<std::size_t>(c)]));
    }
  }
  return out;
}

}  // namespace moncirc
