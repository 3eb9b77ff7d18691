#pragma once

// Circuit checkpoints: a text manifest (format version, parameters with their
// shapes, blocks with kinds / sizes / scopes) followed by raw little-endian
// f64 parameter arrays in manifest order. Round trips are bit-exact.

#include <filesystem>
#include <string>

#include "moncirc/circuit.hpp"

namespace moncirc {

std::string serialize_checkpoint(const CircuitGraph& circuit);
CircuitGraph deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const CircuitGraph& circuit);
CircuitGraph load_checkpoint(const std::filesystem::path& path);

}  // namespace moncirc
