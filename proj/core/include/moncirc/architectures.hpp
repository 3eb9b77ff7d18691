#pragma once

// Circuit builders: hidden Markov models over sequences and hidden Chow-Liu
// trees over fixed-size items, plus hidden-state pruning.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "moncirc/circuit.hpp"
#include "moncirc/dataset.hpp"

namespace moncirc {

enum class SumKind { Dense, Monarch };

/// Parameterization of the hidden-to-hidden sum blocks.
struct SumSpec {
  SumKind kind = SumKind::Dense;
  DimSchedule schedule;  // Monarch only; hidden must match the model

  static SumSpec dense() { return {}; }
  static SumSpec monarch(DimSchedule s) { return {SumKind::Monarch, std::move(s)}; }
};

struct HmmSpec {
  std::size_t length = 1;
  std::size_t hidden = 1;
  std::size_t vocab = 2;
  SumSpec sum;
  bool homogeneous = true;

  /// Throws Config on an invalid spec.
  void check() const;
};

/// Right-to-left HMM: V_{n-1} = L_{n-1}; M_t = Sum(V_{t+1}); V_t = L_t (.) M_t;
/// root = Sum(V_0) with the initial distribution. Parameters are uniform, or
/// seeded random when `seed` is given.
CircuitGraph build_hmm(const HmmSpec& spec, std::optional<std::uint64_t> seed = std::nullopt);

/// Spanning tree over variables, rooted at `root`.
struct ChowLiuTree {
  std::size_t variables = 0;
  std::size_t root = 0;
  std::vector<std::ptrdiff_t> parent;  // -1 at the root
  std::vector<double> weight;          // mutual information of (v, parent(v)); 0 at the root

  std::vector<std::vector<std::size_t>> children() const;
  /// Children before parents.
  std::vector<std::size_t> post_order() const;
  std::vector<std::pair<std::size_t, std::size_t>> edges() const;  // (min, max) pairs, sorted
  /// Throws Contract unless the parent array is a tree rooted at `root`.
  void check() const;
};

/// Empirical mutual information with add-one smoothing of the joint table.
double smoothed_mutual_information(const DatasetShard& data, std::size_t i, std::size_t j, std::size_t vocab);

/// Maximum-weight spanning tree of smoothed pairwise mutual information
/// (ties: lexicographically lower (i, j) edge first), rooted at variable 0.
ChowLiuTree chow_liu(const DatasetShard& data, std::size_t vocab);

/// Latent tree with `hidden` states per variable: each node block is the
/// Hadamard product of its leaf and one sum block per child; the root sum
/// holds the root prior. Edge sum blocks are parameterized by `sum`.
CircuitGraph build_hclt(const ChowLiuTree& tree, std::size_t hidden, std::size_t vocab, const SumSpec& sum,
                        std::optional<std::uint64_t> seed = std::nullopt);

/// Zeroes the input columns of the lowest-flow hidden states of every sum
/// parameter (keeping max(1, ceil(keep * inputs)) states ranked by posterior
/// mass on `calibration`) and renormalizes the affected rows. keep = 1
/// returns an identical circuit.
CircuitGraph prune_hidden_states(const CircuitGraph& circuit, double keep, const DatasetShard& calibration);

}  // namespace moncirc
