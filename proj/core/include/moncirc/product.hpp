#pragma once

// Explicit circuit multiplication: aligned dense circuits are multiplied into
// one circuit whose sum blocks are tied Monarch factorizations.

#include <cstddef>
#include <optional>
#include <span>
#include <string>

#include "moncirc/circuit.hpp"

namespace moncirc {

struct Incompatibility {
  BlockId block = 0;
  std::size_t circuit = 0;  // index of the first circuit that disagrees with circuit 0
  std::string message;
};

/// Block-by-block alignment of circuits that share one skeleton. Blocks are
/// aligned by id: aligned blocks have equal kind, scope, product kind,
/// children, leaf variable and parameter index.
struct CompatibilityCertificate {
  std::size_t circuits = 0;
  std::size_t blocks = 0;
  std::size_t variables = 0;
  std::optional<Incompatibility> mismatch;

  bool compatible() const { return !mismatch.has_value(); }
  std::string to_string() const;
};

/// Throws Domain when the circuits range over different variable sets.
CompatibilityCertificate check_compatible(std::span<const CircuitGraph> circuits);

/// Unnormalized product: exp(evaluate_log(result, x)) = prod_t exp(evaluate_log(c_t, x)).
/// Node indices flatten (i_1, ..., i_d) row-major with circuit 1 most significant.
/// Sum blocks become tied Monarch factorizations materializing to W_1 (x) ... (x) W_d,
/// leaf tables hold per-symbol products across the latent axes (rows not renormalized).
/// Inputs must be dense, single-child-sum, Hadamard-only circuits (Unsupported otherwise);
/// a certificate that does not describe these circuits raises Contract.
CircuitGraph multiply(std::span<const CircuitGraph> circuits, const CompatibilityCertificate& certificate);
CircuitGraph multiply(std::span<const CircuitGraph> circuits);

/// Same values with every Monarch factorization released from its tie.
CircuitGraph untie(const CircuitGraph& circuit);

struct Renormalized {
  CircuitGraph circuit;
  double log_partition = 0.0;  // log of the input circuit's total mass
  std::size_t dead_rows = 0;   // all-zero rows replaced by uniform rows
};

/// Gives every leaf and sum site its own parameter copy.
CircuitGraph unshare_parameters(const CircuitGraph& circuit);

enum class RenormalizeMode {
  /// Exact: parameters are unshared first, then every row is normalized while
  /// its mass is pushed into the parent rows, so p_out(x) = p_in(x) / Z.
  Exact,
  /// Keeps parameter sharing and normalizes each row on its own. The result is
  /// a normalized circuit of the same shape but not, in general, p_in / Z.
  KeepSharing,
};

Renormalized renormalize(const CircuitGraph& circuit, RenormalizeMode mode = RenormalizeMode::Exact);

}  // namespace moncirc
