#pragma once

// Sum-block parameterizations: dense weight matrices and generalized
// multi-layer Monarch factorizations, plus dimension-schedule planning and
// FLOPs / memory accounting.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace moncirc {

/// Non-negative weight matrix of a sum block, output x input.
struct DenseWeights {
  Eigen::MatrixXd w;

  std::size_t rows() const { return static_cast<std::size_t>(w.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(w.cols()); }
  bool row_stochastic(double tol) const;

  friend bool operator==(const DenseWeights& a, const DenseWeights& b) {
    return a.w.rows() == b.w.rows() && a.w.cols() == b.w.cols() && a.w == b.w;
  }
};

/// Square pass-through sum block (one child, weight matrix = I).
struct IdentityMap {
  std::size_t size = 0;
  friend bool operator==(const IdentityMap&, const IdentityMap&) = default;
};

/// Generalized d-layer Monarch factorization.
///
/// Layer t (0-based here) contracts input axis i_t with a factor
///   A^t[j_t, i_t, i_{t+1}, ..., i_{d-1}, j_0, ..., j_{t-1}]
/// whose trailing indices form the layer's batch axis r, flattened row-major.
/// The contraction output is left-shifted so the next layer again contracts
/// its leading axis; after d layers the result is indexed by (j_0, ..., j_{d-1}).
/// Multi-indices are flattened row-major with the first index most significant.
///
/// Storage is slice-major: for each batch index r the m_t x n_t slice
/// A^t[:, :, r] is contiguous and row-major. Normalization is per slice row.
class MonarchFactorization {
 public:
  MonarchFactorization() = default;
  /// Zero-filled factorization. Both dimension lists must have equal length >= 1.
  MonarchFactorization(std::vector<std::size_t> in_dims, std::vector<std::size_t> out_dims);

  /// Square factorization with identity slices.
  static MonarchFactorization identity(std::vector<std::size_t> dims);
  /// Tied factorization whose materialization is kernels[0] (x) ... (x) kernels[d-1].
  static MonarchFactorization kronecker(std::span<const Eigen::MatrixXd> kernels);

  std::size_t depth() const { return in_.size(); }
  const std::vector<std::size_t>& in_dims() const { return in_; }
  const std::vector<std::size_t>& out_dims() const { return out_; }
  std::size_t input_size() const;
  std::size_t output_size() const;

  std::size_t layer_out(std::size_t t) const { return out_[t]; }
  std::size_t layer_in(std::size_t t) const { return in_[t]; }
  std::size_t layer_batch(std::size_t t) const { return batch_[t]; }
  std::size_t layer_size(std::size_t t) const { return layers_[t].size(); }

  std::span<double> layer(std::size_t t) { return layers_[t]; }
  std::span<const double> layer(std::size_t t) const { return layers_[t]; }
  std::span<double> slice(std::size_t t, std::size_t r);
  std::span<const double> slice(std::size_t t, std::size_t r) const;

  /// Canonical accessor A^t[j, i, r].
  double& at(std::size_t t, std::size_t j, std::size_t i, std::size_t r) {
    return layers_[t][(r * out_[t] + j) * in_[t] + i];
  }
  double at(std::size_t t, std::size_t j, std::size_t i, std::size_t r) const {
    return layers_[t][(r * out_[t] + j) * in_[t] + i];
  }

  /// True while every slice of each layer is the same matrix (product-construction output).
  bool tied() const { return tied_; }
  void set_tied(bool tied) { tied_ = tied; }
  /// Drops the tie so slices evolve independently; values are unchanged.
  void untie() { tied_ = false; }

  std::size_t parameter_count() const;
  bool row_stochastic(double tol) const;
  bool non_negative() const;

  friend bool operator==(const MonarchFactorization&, const MonarchFactorization&) = default;

 private:
  std::vector<std::size_t> in_;
  std::vector<std::size_t> out_;
  std::vector<std::size_t> batch_;
  std::vector<std::vector<double>> layers_;
  bool tied_ = false;
};

/// Linear-space apply. x has input_size() entries.
std::vector<double> monarch_apply(const MonarchFactorization& fact, std::span<const double> x);

/// Log-space twin of monarch_apply: log-sum-exp per contraction, -inf for exact zeros.
std::vector<double> monarch_apply_logspace(const MonarchFactorization& fact,
                                           std::span<const double> log_x);

/// Largest matrix materialize() will build (rows * cols).
inline constexpr std::size_t kMaterializeLimit = std::size_t{1} << 20;

/// Dense matrix M with monarch_apply(fact, x) == M x. Throws Refusal above kMaterializeLimit.
DenseWeights materialize(const MonarchFactorization& fact);

/// Per-layer dimensions for a hidden size h split across `depth` layers.
struct DimSchedule {
  std::size_t hidden = 0;
  std::size_t base = 0;  // largest per-layer dim
  std::vector<std::size_t> dims;

  std::size_t depth() const { return dims.size(); }
};

/// Near-equal split of h into `depth` factors, larger factors last.
DimSchedule plan_schedule(std::size_t hidden, std::size_t depth);
/// Split with every factor equal to `base`; h must be an exact power of it.
DimSchedule plan_schedule_base(std::size_t hidden, std::size_t base);
/// Explicit dims; their product must equal h.
DimSchedule plan_schedule_dims(std::size_t hidden, std::vector<std::size_t> dims);

/// Square factorization shaped by a schedule (zero-filled).
MonarchFactorization make_monarch(const DimSchedule& schedule);

/// Multiply-adds of one dense h_out x h_in apply.
std::uint64_t dense_flops(std::uint64_t out, std::uint64_t in);
/// Multiply-adds of one apply of a square factorization with this schedule.
std::uint64_t flops_per_apply(const DimSchedule& schedule);
/// Multiply-adds of one apply: sum over layers of m_t * n_t * batch_t.
std::uint64_t flops_per_apply(const MonarchFactorization& fact);

enum class ModelKind { Dense, Monarch };

struct MemoryElements {
  std::uint64_t parameters = 0;
  std::uint64_t activations = 0;
};

/// Training-memory element counts for an HMM-style model: parameters plus
/// cached node values for sequence length n and batch size B.
MemoryElements memory_elements(ModelKind kind, std::uint64_t hidden, std::uint64_t seq_len,
                               std::uint64_t batch, std::uint64_t depth);

}  // namespace moncirc
