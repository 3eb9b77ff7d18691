#pragma once

// Exact log-space queries over a circuit: likelihoods, marginals, ancestral
// sampling and EM flows (expected edge counts).

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "moncirc/circuit.hpp"
#include "moncirc/dataset.hpp"

namespace moncirc {

/// Expected-count accumulators mirroring one sum parameter.
///
/// edges: DenseWeights -> one out x in matrix stored column-major (same layout
/// as the Eigen weight matrix); MonarchFactorization -> one vector per layer
/// in the factor's slice-major layout; IdentityMap -> empty.
/// inputs: posterior node mass at the inputs of each layer (dense: one vector
/// of size in; Monarch layer t: n_t * batch_t entries, index i * batch_t + r).
struct ParamFlow {
  std::vector<std::vector<double>> edges;
  std::vector<std::vector<double>> inputs;
};

/// EM sufficient statistics for a batch. Shapes mirror the circuit parameters;
/// tied parameters receive the sum over every site that shares them.
struct FlowTable {
  std::vector<ParamFlow> sums;
  std::vector<std::vector<double>> leaves;  // rows x vocab, row-major
  std::size_t items = 0;
  std::size_t zero_flow_items = 0;  // items with p(x) = 0; they contribute no flow
  double log_likelihood = 0.0;      // summed over items with p(x) > 0

  static FlowTable zeros_like(const CircuitGraph& graph);
  /// Elementwise accumulation; associative, applied in a fixed order by callers.
  void merge(const FlowTable& other);
  bool non_negative() const;
};

/// log p(x) for a full assignment (one entry per variable).
double evaluate_log(const CircuitGraph& graph, std::span<const std::int32_t> assignment);

/// log p for every row; kMissing entries are marginalized out.
std::vector<double> evaluate_log_batch(const CircuitGraph& graph, const DatasetShard& data);

/// Sum of evaluate_log_batch in row order.
double total_log_likelihood(const CircuitGraph& graph, const DatasetShard& data);

/// log of the total mass of all completions of the partial assignment.
double marginalize_log(const CircuitGraph& graph,
                       const std::map<std::size_t, std::int32_t>& evidence);

/// Top-down ancestral sample. The circuit must be flagged normalized.
std::vector<std::int32_t> sample(const CircuitGraph& graph, std::uint64_t seed);
/// `count` samples from one seeded stream.
DatasetShard sample_batch(const CircuitGraph& graph, std::size_t count, std::uint64_t seed);

/// Expected edge counts over data rows (all rows if `rows` is empty), computed
/// by one log-space forward and one backward pass per chunk of rows. Chunks
/// are reduced in row order, so the result does not depend on MC_WORKERS.
FlowTable flows(const CircuitGraph& graph, const DatasetShard& data,
                std::span<const std::size_t> rows = {});

}  // namespace moncirc
