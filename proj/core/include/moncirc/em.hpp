#pragma once

// Full-batch and stochastic mini-batch EM over circuit flows.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "moncirc/circuit.hpp"
#include "moncirc/dataset.hpp"
#include "moncirc/inference.hpp"
#include "moncirc/product.hpp"

namespace moncirc {

inline constexpr double kParamFloor = 1e-8;

enum class Schedule { Linear, Cosine, Constant };
std::string to_string(Schedule s);
Schedule parse_schedule(const std::string& s);

struct EMConfig {
  std::size_t batch_size = 4096;
  std::size_t epochs = 20;
  Schedule schedule = Schedule::Linear;
  double eta = 1.0;  // step size of the constant schedule
  double floor = kParamFloor;
  std::uint64_t seed = 0;
  bool record_time = false;  // wallclock_ms stays 0 unless set, keeping logs reproducible

  static EMConfig text_defaults();
  static EMConfig image_defaults();
  /// Throws Config on batch 0, epochs 0, eta outside (0, 1] or a floor outside [0, 0.5).
  void check() const;
};

/// Step size at global step s of `total` (linear 1 -> 0, cosine 1 -> 0, or constant eta).
double step_size(const EMConfig& config, std::size_t step, std::size_t total);

struct EpochRecord {
  std::size_t epoch = 0;
  std::string split;  // "train" (running average over the epoch's batches) or "eval"
  double bpc = 0.0;
  double nats_per_token = 0.0;
  std::uint64_t cumulative_flops = 0;       // sum-block multiply-adds
  double wallclock_ms = 0.0;
  std::uint64_t cumulative_leaf_flops = 0;  // emission lookups, reported apart
};

struct TrainLog {
  std::vector<EpochRecord> records;

  static constexpr const char* kCsvHeader =
      "epoch,split,bpc,nats_per_token,cumulative_flops,wallclock_ms,cumulative_leaf_flops";
  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

/// Floored maximum-likelihood row: argmax sum_i c_i log t_i over {t_i >= floor, sum t = 1}.
/// Returns false (row untouched) when the counts are all zero.
bool floored_normalize(std::span<const double> counts, std::span<double> out, double floor);

/// theta <- (1 - eta) theta + eta * theta_hat per row, theta_hat from the flows.
/// Rows without flow keep their values.
void apply_flows(CircuitGraph& circuit, const FlowTable& table, double eta, double floor = kParamFloor);

/// One EM iteration on all rows. Returns the log-likelihood before the update.
double em_full_step(CircuitGraph& circuit, const DatasetShard& data, double floor = kParamFloor);

/// One stochastic EM step on the given rows. Returns their log-likelihood before the update.
double em_minibatch_step(CircuitGraph& circuit, const DatasetShard& data, std::span<const std::size_t> rows,
                         double eta, double floor = kParamFloor);

/// Seeded shuffled mini-batch EM. When `eval` is given, an exact held-out row is logged per epoch.
TrainLog train(CircuitGraph& circuit, const DatasetShard& data, const EMConfig& config,
               const DatasetShard* eval = nullptr);

struct FactorConfig {
  std::size_t hidden = 1;
  EMConfig config;
};

/// Builds the t-th factor circuit with the given hidden size.
using FactorBuilder = std::function<CircuitGraph(std::size_t index, std::size_t hidden)>;

/// Trains each factor (skipped when its epochs is 0), multiplies them, unties
/// and renormalizes. A single factor is returned as trained.
CircuitGraph init_from_product(const FactorBuilder& build, std::span<const FactorConfig> factors,
                               const DatasetShard& data, RenormalizeMode mode = RenormalizeMode::KeepSharing);

/// -ll / (count ln 2).
double bits_per_dim(double log_likelihood, std::size_t count);
/// exp(-ll / count).
double perplexity(double log_likelihood, std::size_t count);

}  // namespace moncirc
