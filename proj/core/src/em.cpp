#include "moncirc/em.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "moncirc/error.hpp"
#include "moncirc/random.hpp"

namespace moncirc {

std::string to_string(Schedule s) {
  switch (s) {
    case Schedule::Linear: return "linear";
    case Schedule::Cosine: return "cosine";
    case Schedule::Constant: return "const";
  }
  return "linear";
}

Schedule parse_schedule(const std::string& s) {
  if (s == "linear") return Schedule::Linear;
  if (s == "cosine") return Schedule::Cosine;
  if (s == "const" || s == "constant") return Schedule::Constant;
  raise(ErrorKind::Config, "unknown schedule '" + s + "' (expected linear, cosine or const)");
}

EMConfig EMConfig::text_defaults() { return EMConfig{}; }

EMConfig EMConfig::image_defaults() {
  EMConfig c;
  c.batch_size = 20000;
  c.schedule = Schedule::Cosine;
  return c;
}

void EMConfig::check() const {
  require(batch_size >= 1, ErrorKind::Config, "batch size must be at least 1");
  require(epochs >= 1, ErrorKind::Config, "epochs must be at least 1");
  require(eta > 0.0 && eta <= 1.0, ErrorKind::Config, "eta must lie in (0, 1]");
  require(floor >= 0.0 && floor < 0.5, ErrorKind::Config, "parameter floor must lie in [0, 0.5)");
}

double step_size(const EMConfig& config, std::size_t step, std::size_t total) {
  const double frac = total == 0 ? 0.0 : static_cast<double>(step) / static_cast<double>(total);
  switch (config.schedule) {
    case Schedule::Linear: return 1.0 - frac;
    case Schedule::Cosine: return 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
    case Schedule::Constant: return config.eta;
  }
  return config.eta;
}

std::string TrainLog::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << kCsvHeader << "\n";
  for (const auto& r : records) {
    os << r.epoch << "," << r.split << "," << r.bpc << "," << r.nats_per_token << "," << r.cumulative_flops
       << "," << r.wallclock_ms << "," << r.cumulative_leaf_flops << "\n";
  }
  return os.str();
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out << to_csv();
}

bool floored_normalize(std::span<const double> counts, std::span<double> out, double floor) {
  const std::size_t n = counts.size();
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  if (!(total > 0.0)) return false;
  if (floor * static_cast<double>(n) >= 1.0) {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(n));
    return true;
  }
  const double cmin = *std::min_element(counts.begin(), counts.end());
  if (cmin / total >= floor) {
    for (std::size_t i = 0; i < n; ++i) out[i] = counts[i] / total;
    return true;
  }
  // Entries whose unconstrained value would fall below the floor are pinned
  // to it; the rest share the remaining mass in proportion to their counts.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return counts[a] < counts[b] || (counts[a] == counts[b] && a < b);
  });
  double rest = total;
  std::size_t pinned = 0;
  double lambda = total;
  while (pinned < n) {
    lambda = rest / (1.0 - static_cast<double>(pinned) * floor);
    if (counts[order[pinned]] / lambda >= floor) break;
    rest -= counts[order[pinned]];
    ++pinned;
  }
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = order[k];
    out[i] = k < pinned ? floor : counts[i] / lambda;
  }
  return true;
}

namespace {

// Mixes one row in place: theta <- (1 - eta) theta + eta * theta_hat.
void update_row(std::span<const double> counts, std::span<double> theta, double eta, double floor,
                std::vector<double>& scratch) {
  scratch.resize(counts.size());
  if (!floored_normalize(counts, scratch, floor)) return;
  if (eta >= 1.0) {
    std::copy(scratch.begin(), scratch.end(), theta.begin());
    return;
  }
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = (1.0 - eta) * theta[i] + eta * scratch[i];
}

void update_dense(DenseWeights& d, const ParamFlow& pf, double eta, double floor) {
  const auto out = d.w.rows(), in = d.w.cols();
  std::vector<double> counts(static_cast<std::size_t>(in)), theta(static_cast<std::size_t>(in)), scratch;
  const auto& acc = pf.edges[0];
  for (Eigen::Index j = 0; j < out; ++j) {
    for (Eigen::Index i = 0; i < in; ++i) {
      counts[static_cast<std::size_t>(i)] = acc[static_cast<std::size_t>(i * out + j)];
      theta[static_cast<std::size_t>(i)] = d.w(j, i);
    }
    update_row(counts, theta, eta, floor, scratch);
    for (Eigen::Index i = 0; i < in; ++i) d.w(j, i) = theta[static_cast<std::size_t>(i)];
  }
}

void update_monarch(MonarchFactorization& f, const ParamFlow& pf, double eta, double floor) {
  std::vector<double> scratch;
  for (std::size_t t = 0; t < f.depth(); ++t) {
    const std::size_t mo = f.layer_out(t), ni = f.layer_in(t), R = f.layer_batch(t);
    const auto& acc = pf.edges[t];
    if (f.tied()) {
      std::vector<double> kernel_counts(mo * ni, 0.0);
      for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t k = 0; k < mo * ni; ++k) kernel_counts[k] += acc[r * mo * ni + k];
      }
      std::vector<double> kernel(f.slice(t, 0).begin(), f.slice(t, 0).end());
      for (std::size_t j = 0; j < mo; ++j) {
        update_row(std::span<const double>(kernel_counts).subspan(j * ni, ni),
                   std::span<double>(kernel).subspan(j * ni, ni), eta, floor, scratch);
      }
      for (std::size_t r = 0; r < R; ++r) std::copy(kernel.begin(), kernel.end(), f.slice(t, r).begin());
    } else {
      auto layer = f.layer(t);
      for (std::size_t off = 0; off < layer.size(); off += ni) {
        update_row(std::span<const double>(acc).subspan(off, ni), layer.subspan(off, ni), eta, floor, scratch);
      }
    }
  }
}

}  // namespace

void apply_flows(CircuitGraph& circuit, const FlowTable& table, double eta, double floor) {
  require(eta >= 0.0 && eta <= 1.0, ErrorKind::Config, "step size must lie in [0, 1]");
  require(table.sums.size() == circuit.sum_params().size() &&
              table.leaves.size() == circuit.leaf_tables().size(),
          ErrorKind::Dimension, "flow table does not mirror the circuit");
  if (eta == 0.0) return;
  std::vector<double> scratch;
  for (std::size_t l = 0; l < circuit.leaf_tables().size(); ++l) {
    LeafTable& t = circuit.leaf_tables()[l];
    const auto& acc = table.leaves[l];
    for (std::size_t k = 0; k < t.rows; ++k) {
      update_row(std::span<const double>(acc).subspan(k * t.vocab, t.vocab), t.row(k), eta, floor, scratch);
    }
  }
  for (std::size_t p = 0; p < circuit.sum_params().size(); ++p) {
    SumParam& param = circuit.sum_params()[p];
    if (auto* d = std::get_if<DenseWeights>(&param)) update_dense(*d, table.sums[p], eta, floor);
    else if (auto* f = std::get_if<MonarchFactorization>(&param)) update_monarch(*f, table.sums[p], eta, floor);
  }
}

namespace {
double table_log_likelihood(const FlowTable& t) {
  return t.zero_flow_items > 0 ? -std::numeric_limits<double>::infinity() : t.log_likelihood;
}
}  // namespace

double em_minibatch_step(CircuitGraph& circuit, const DatasetShard& data, std::span<const std::size_t> rows,
                         double eta, double floor) {
  require(circuit.normalized(), ErrorKind::Contract, "EM requires a normalized circuit");
  require(data.items > 0, ErrorKind::Contract, "EM on an empty dataset");
  std::vector<std::size_t> all;
  if (rows.empty()) {
    all.resize(data.items);
    std::iota(all.begin(), all.end(), std::size_t{0});
    rows = all;
  }
  const FlowTable table = flows(circuit, data, rows);
  apply_flows(circuit, table, eta, floor);
  return table_log_likelihood(table);
}

double em_full_step(CircuitGraph& circuit, const DatasetShard& data, double floor) {
  return em_minibatch_step(circuit, data, {}, 1.0, floor);
}

TrainLog train(CircuitGraph& circuit, const DatasetShard& data, const EMConfig& config, const DatasetShard* eval) {
  config.check();
  require(data.items > 0, ErrorKind::Contract, "training on an empty dataset");
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  auto elapsed_ms = [&] {
    if (!config.record_time) return 0.0;
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  };

  const std::size_t N = data.items;
  const std::size_t K = (N + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = config.epochs * K;
  const std::uint64_t hidden = hidden_flops(circuit), leaf = leaf_flops(circuit);

  TrainLog log;
  Rng rng(config.seed);
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::uint64_t flops = 0, leaf_total = 0;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = N; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double ll = 0.0;
    for (std::size_t k = 0; k < K; ++k, ++step) {
      const std::size_t begin = k * config.batch_size, end = std::min(N, begin + config.batch_size);
      const std::span<const std::size_t> rows(order.data() + begin, end - begin);
      ll += em_minibatch_step(circuit, data, rows, step_size(config, step, total_steps), config.floor);
      const std::uint64_t tokens = static_cast<std::uint64_t>(rows.size()) * data.variables;
      flops += hidden * tokens;
      leaf_total += leaf * tokens;
    }
    const std::size_t tokens = N * data.variables;
    log.records.push_back({epoch, "train", bits_per_dim(ll, tokens), -ll / static_cast<double>(tokens), flops,
                           elapsed_ms(), leaf_total});
    if (eval != nullptr && eval->items > 0) {
      const double ell = total_log_likelihood(circuit, *eval);
      const std::size_t etokens = eval->items * eval->variables;
      log.records.push_back({epoch, "eval", bits_per_dim(ell, etokens), -ell / static_cast<double>(etokens), flops,
                             elapsed_ms(), leaf_total});
    }
  }
  return log;
}

CircuitGraph init_from_product(const FactorBuilder& build, std::span<const FactorConfig> factors,
                               const DatasetShard& data, RenormalizeMode mode) {
  require(!factors.empty(), ErrorKind::Config, "init_from_product needs at least one factor");
  std::vector<CircuitGraph> trained;
  trained.reserve(factors.size());
  for (std::size_t t = 0; t < factors.size(); ++t) {
    CircuitGraph c = build(t, factors[t].hidden);
    if (factors[t].config.epochs > 0) train(c, data, factors[t].config);
    trained.push_back(std::move(c));
  }
  if (trained.size() == 1) return std::move(trained.front());
  const auto cert = check_compatible(trained);
  require(cert.compatible(), ErrorKind::Contract, "factor circuits are incompatible: " + cert.to_string());
  CircuitGraph product = untie(multiply(trained, cert));
  return renormalize(product, mode).circuit;
}

double bits_per_dim(double log_likelihood, std::size_t count) {
  require(count > 0, ErrorKind::Contract, "bits_per_dim needs a positive count");
  return -log_likelihood / (static_cast<double>(count) * std::numbers::ln2);
}

double perplexity(double log_likelihood, std::size_t count) {
  require(count > 0, ErrorKind::Contract, "perplexity needs a positive count");
  return std::exp(-log_likelihood / static_cast<double>(count));
}

}  // namespace moncirc
