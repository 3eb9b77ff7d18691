#pragma once

// Tensorized probabilistic circuits: leaf, product and sum blocks over a
// shared, immutable topology, with separately owned parameters.

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "moncirc/monarch.hpp"

namespace moncirc {

using BlockId = std::size_t;
/// Sorted, duplicate-free variable indices.
using VariableScope = std::vector<std::uint32_t>;

enum class BlockKind : std::uint8_t { Leaf, Product, Sum };
enum class ProductKind : std::uint8_t { Hadamard, Kronecker };

struct Block {
  BlockKind kind = BlockKind::Leaf;
  std::size_t size = 0;
  std::vector<BlockId> children;
  ProductKind product = ProductKind::Hadamard;
  std::size_t variable = 0;  // leaves
  std::size_t param = 0;     // leaves: leaf table index; sums: sum parameter index

  static Block leaf(std::size_t variable, std::size_t size, std::size_t table);
  static Block hadamard(std::vector<BlockId> children, std::size_t size);
  static Block kronecker(std::vector<BlockId> children, std::size_t size);
  static Block sum(std::vector<BlockId> children, std::size_t size, std::size_t param);
};

/// Per-node categorical distributions of a leaf block, rows x vocab, row-major.
struct LeafTable {
  std::size_t rows = 0;
  std::size_t vocab = 0;
  std::vector<double> probs;

  static LeafTable uniform(std::size_t rows, std::size_t vocab);
  double& at(std::size_t k, std::size_t v) { return probs[k * vocab + v]; }
  double at(std::size_t k, std::size_t v) const { return probs[k * vocab + v]; }
  std::span<double> row(std::size_t k) { return std::span<double>(probs).subspan(k * vocab, vocab); }
  std::span<const double> row(std::size_t k) const {
    return std::span<const double>(probs).subspan(k * vocab, vocab);
  }
  bool row_stochastic(double tol) const;

  friend bool operator==(const LeafTable&, const LeafTable&) = default;
};

using SumParam = std::variant<DenseWeights, MonarchFactorization, IdentityMap>;

std::size_t param_inputs(const SumParam& p);
std::size_t param_outputs(const SumParam& p);
std::size_t param_count(const SumParam& p);
std::uint64_t param_flops(const SumParam& p);
bool param_row_stochastic(const SumParam& p, double tol);
std::string param_kind(const SumParam& p);

/// Block list in topological order plus derived scopes. Shared between copies
/// of a circuit; never mutated after construction.
struct Topology {
  std::vector<Block> blocks;
  BlockId root = 0;
  std::vector<VariableScope> scopes;
  std::size_t num_variables = 0;  // 1 + largest leaf variable
};

class CircuitGraph {
 public:
  CircuitGraph() = default;
  /// Checks structural well-formedness (children precede parents, indices in
  /// range) and throws Contract otherwise. Semantic properties (smoothness,
  /// decomposability, dimensions) are left to validate().
  CircuitGraph(std::vector<Block> blocks, BlockId root, std::vector<LeafTable> leaves,
               std::vector<SumParam> sums, bool normalized);

  const std::vector<Block>& blocks() const { return topo_->blocks; }
  const Block& block(BlockId id) const { return topo_->blocks[id]; }
  std::size_t num_blocks() const { return topo_->blocks.size(); }
  BlockId root() const { return topo_->root; }
  const VariableScope& scope(BlockId id) const { return topo_->scopes[id]; }
  std::size_t num_variables() const { return topo_->num_variables; }
  std::shared_ptr<const Topology> topology() const { return topo_; }

  std::vector<LeafTable>& leaf_tables() { return leaves_; }
  const std::vector<LeafTable>& leaf_tables() const { return leaves_; }
  std::vector<SumParam>& sum_params() { return sums_; }
  const std::vector<SumParam>& sum_params() const { return sums_; }

  bool normalized() const { return normalized_; }
  void set_normalized(bool v) { normalized_ = v; }

  /// Vocabulary of variable v (from the first leaf over it).
  std::size_t vocab(std::size_t variable) const;

  /// Free-form descriptive entries carried through checkpoints (architecture, data transform).
  std::map<std::string, std::string> metadata;

 private:
  std::shared_ptr<const Topology> topo_;
  std::vector<LeafTable> leaves_;
  std::vector<SumParam> sums_;
  bool normalized_ = false;
};

enum class ViolationKind { Smoothness, Decomposability, Dimension, Normalization, Structure };

struct Violation {
  ViolationKind kind;
  BlockId block;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  bool has(ViolationKind kind) const;
  std::string to_string() const;
};

std::string_view to_string(ViolationKind kind);

/// Lists every smoothness, decomposability, dimension and (if the circuit is
/// flagged normalized) normalization violation. Never throws.
ValidationReport validate(const CircuitGraph& graph, double tol = 1e-9);

/// Same circuit with blocks stored in a different topological order:
/// new_order[k] is the old id of the block placed at position k.
CircuitGraph reorder_blocks(const CircuitGraph& graph, std::span<const BlockId> new_order);

/// Fills every leaf row, dense row and Monarch slice row with seeded random
/// positive values and normalizes them.
void randomize_parameters(CircuitGraph& graph, std::uint64_t seed);

/// Multiply-adds of the most expensive sum parameter (per-token / per-variable cost).
std::uint64_t hidden_flops(const CircuitGraph& graph);
/// Rows of the largest leaf table (per-token emission cost).
std::uint64_t leaf_flops(const CircuitGraph& graph);
/// Number of stored parameters across leaves and sums.
std::size_t parameter_count(const CircuitGraph& graph);

}  // namespace moncirc
