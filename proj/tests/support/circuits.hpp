#pragma once

// Small random circuits shared by unit and acceptance tests.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "moncirc/circuit.hpp"

namespace moncirc::fixtures {

/// One sum block over two single-node leaves of variable 0 (vocab 2).
CircuitGraph two_leaf_mixture(double w0, double w1, std::vector<double> leaf0, std::vector<double> leaf1);

/// Mixture over variables {0, 1} that exercises a Kronecker product and a
/// multi-child sum block.
CircuitGraph kronecker_mixture(std::uint64_t seed);

/// Named, normalized circuits with at most 4 variables and vocab at most 4.
std::vector<std::pair<std::string, CircuitGraph>> small_zoo(std::uint64_t seed);

}  // namespace moncirc::fixtures
