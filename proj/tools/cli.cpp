#include "cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "moncirc/architectures.hpp"
#include "moncirc/checkpoint.hpp"
#include "moncirc/dataset.hpp"
#include "moncirc/em.hpp"
#include "moncirc/error.hpp"
#include "moncirc/inference.hpp"
#include "moncirc/product.hpp"

namespace moncirc::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string command;
  std::string data, eval_data, format = "text", color = "rgb", checkpoint, out;
  std::size_t chunk = 0, vocab = 0, patch = 8, max_items = 0;
  std::string arch = "hmm", sum = "dense";
  std::size_t hidden = 16, depth = 2, base = 0;
  std::size_t batch = 0, epochs = 0;
  std::string schedule;
  double eta = 0.0;
  std::uint64_t seed = 0;
  std::size_t count = 1;
  std::string fractions = "1,0.9,0.5,0.1";
  std::string grid;
  std::string factors = "4,4,4";
  std::size_t factor_epochs = 1;
  std::string sizes = "4096,8192,16384,32768";
  std::size_t seq_len = 256;
  bool time = false;
};

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    if (!cur.empty()) parts.push_back(cur);
  }
  return parts;
}

std::size_t to_size(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used == s.size()) return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
  }
  raise(ErrorKind::Config, "bad " + what + " '" + s + "'");
}

double to_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  raise(ErrorKind::Config, "bad " + what + " '" + s + "'");
}

bool image_format(const Options& o) { return o.format == "images" || o.format == "shard"; }

DatasetShard load_data(const Options& o, const std::string& path, const std::string& flag) {
  require(!path.empty(), ErrorKind::Config, flag + " is required for " + o.command);
  require(fs::exists(path), ErrorKind::Config, "data path does not exist: " + path);
  DatasetShard d;
  if (o.format == "text") {
    d = load_text_file(path, o.chunk ? o.chunk : kTextChunk);
  } else if (o.format == "tokens") {
    require(o.vocab > 0, ErrorKind::Config, "--vocab is required for token data");
    d = load_token_file(path, o.chunk ? o.chunk : kTokenSequence, o.vocab);
  } else if (o.format == "images") {
    d = extract_patches(read_image_container(path), o.patch, parse_color_transform(o.color));
  } else if (o.format == "shard") {
    d = read_shard(path);
  } else {
    raise(ErrorKind::Config, "unknown data format '" + o.format + "'");
  }
  if (o.max_items > 0 && d.items > o.max_items) d = d.slice(0, o.max_items);
  return d;
}

EMConfig em_config(const Options& o) {
  EMConfig c = image_format(o) ? EMConfig::image_defaults() : EMConfig::text_defaults();
  if (o.batch) c.batch_size = o.batch;
  if (o.epochs) c.epochs = o.epochs;
  if (!o.schedule.empty()) c.schedule = parse_schedule(o.schedule);
  if (o.eta > 0.0) c.eta = o.eta;
  c.seed = o.seed;
  c.record_time = o.time;
  c.check();
  return c;
}

SumSpec sum_spec(const std::string& sum, std::size_t hidden, std::size_t depth, std::size_t base) {
  if (sum == "dense") return SumSpec::dense();
  require(sum == "monarch", ErrorKind::Config, "unknown sum kind '" + sum + "' (expected dense or monarch)");
  return SumSpec::monarch(base ? plan_schedule_base(hidden, base) : plan_schedule(hidden, depth));
}

void describe_data(CircuitGraph& g, const Options& o, const DatasetShard& d) {
  g.metadata["format"] = o.format;
  g.metadata["variables"] = std::to_string(d.variables);
  if (o.format == "images") {
    g.metadata["color"] = o.color;
    g.metadata["patch"] = std::to_string(o.patch);
  }
}

CircuitGraph build_model(const Options& o, const DatasetShard& data, std::size_t hidden, const SumSpec& spec,
                         std::uint64_t seed, const std::optional<ChowLiuTree>& tree = std::nullopt) {
  CircuitGraph g;
  if (o.arch == "hmm") {
    g = build_hmm({data.variables, hidden, data.vocab, spec, true}, seed);
  } else if (o.arch == "hclt") {
    g = build_hclt(tree ? *tree : chow_liu(data, data.vocab), hidden, data.vocab, spec, seed);
  } else {
    raise(ErrorKind::Config, "unknown architecture '" + o.arch + "' (expected hmm or hclt)");
  }
  describe_data(g, o, data);
  return g;
}

void check_shape(const CircuitGraph& g, const DatasetShard& d) {
  require(g.num_variables() == d.variables, ErrorKind::Dimension,
          "model has " + std::to_string(g.num_variables()) + " variables, data has " + std::to_string(d.variables));
  for (std::size_t v = 0; v < d.variables; ++v) {
    require(d.vocab <= g.vocab(v), ErrorKind::Dimension,
            "data vocabulary " + std::to_string(d.vocab) + " exceeds the model's " + std::to_string(g.vocab(v)));
  }
}

CircuitGraph load_model(const std::string& path) {
  require(!path.empty(), ErrorKind::Config, "--checkpoint is required");
  require(fs::exists(path), ErrorKind::Config, "checkpoint does not exist: " + path);
  return load_checkpoint(path);
}

fs::path out_dir(const Options& o) {
  require(!o.out.empty(), ErrorKind::Config, "--out is required for " + o.command);
  std::error_code ec;
  fs::create_directories(o.out, ec);
  require(!ec && fs::is_directory(o.out), ErrorKind::Config, "cannot create output directory " + o.out);
  return fs::path(o.out);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::Io, "cannot write " + path.string());
  f << text;
}

double finite_ll(double ll) {
  require(std::isfinite(ll), ErrorKind::Numeric, "log-likelihood is not finite (" + num(ll) + ")");
  return ll;
}

int cmd_train(const Options& o, std::ostream& out) {
  const DatasetShard data = load_data(o, o.data, "--data");
  require(data.items > 0, ErrorKind::Data, "training data has no items");
  std::optional<DatasetShard> eval;
  if (!o.eval_data.empty()) eval = load_data(o, o.eval_data, "--eval-data");
  CircuitGraph g = o.checkpoint.empty()
                       ? build_model(o, data, o.hidden, sum_spec(o.sum, o.hidden, o.depth, o.base), o.seed)
                       : load_model(o.checkpoint);
  check_shape(g, data);
  const EMConfig cfg = em_config(o);
  const TrainLog log = train(g, data, cfg, eval ? &*eval : nullptr);
  const fs::path dir = out_dir(o);
  save_checkpoint(dir / "model.ckpt", g);
  log.write_csv(dir / "train_log.csv");
  const EpochRecord& last = log.records.back();
  out << "epochs=" << cfg.epochs << " final_" << last.split << "_bpc=" << num(last.bpc)
      << " cumulative_flops=" << last.cumulative_flops << " checkpoint=" << (dir / "model.ckpt").string() << "\n";
  for (const auto& r : log.records) {
    require(std::isfinite(r.bpc), ErrorKind::Numeric, "epoch " + std::to_string(r.epoch) + " " + r.split +
                                                          " bpc is not finite");
  }
  return kOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const CircuitGraph g = load_model(o.checkpoint);
  const DatasetShard data = load_data(o, o.data, "--data");
  check_shape(g, data);
  require(data.items > 0, ErrorKind::Data, "evaluation data has no items");
  const double ll = finite_ll(total_log_likelihood(g, data));
  const std::size_t tokens = data.items * data.variables;
  out << "items=" << data.items << " tokens=" << tokens << " log_likelihood=" << num(ll)
      << " bpc=" << num(bits_per_dim(ll, tokens)) << " nats_per_token=" << num(-ll / static_cast<double>(tokens))
      << " perplexity=" << num(perplexity(ll, tokens)) << " flops_per_token=" << hidden_flops(g) << "\n";
  return kOk;
}

int cmd_sample(const Options& o, std::ostream& out) {
  const CircuitGraph g = load_model(o.checkpoint);
  const auto start = std::chrono::steady_clock::now();
  const DatasetShard samples = sample_batch(g, o.count, o.seed);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  const auto meta = [&](const std::string& k) {
    const auto it = g.metadata.find(k);
    return it == g.metadata.end() ? std::string() : it->second;
  };
  const std::string format = meta("format");
  if (format == "text") {
    std::string text;
    for (std::size_t n = 0; n < samples.items; ++n) {
      for (std::int32_t v : samples.row(n)) text.push_back(text_symbol(v));
      text.push_back('\n');
    }
    if (o.out.empty()) out << text;
    else write_text(out_dir(o) / "samples.txt", text);
  } else {
    const fs::path dir = out_dir(o);
    const std::string color = meta("color");
    const std::size_t patch = meta("patch").empty() ? 0 : to_size(meta("patch"), "patch metadata");
    bool decoded = false;
    if (format == "images" && color != "ycocg-lossy" && samples.items > 0 && samples.variables == patch * patch * 3) {
      // Sampled chroma triples need not invert to an RGB pixel; keep the raw shard then.
      try {
        write_image_container(dir / "samples.img",
                              assemble_patches(samples, patch, patch, patch, parse_color_transform(color)));
        decoded = true;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Domain) throw;
      }
    }
    if (!decoded) write_shard(dir / "samples.shard", samples);
  }
  out << "samples=" << samples.items << " total_ms=" << num(ms)
      << " per_sample_ms=" << num(samples.items ? ms / static_cast<double>(samples.items) : 0.0) << "\n";
  return kOk;
}

struct GridPoint {
  std::string sum;
  std::size_t hidden = 0, depth = 1, base = 0;
};

// Entries: dense@H, m<D>@H (Monarch with D layers), b<B>@H (Monarch with base B).
std::vector<GridPoint> parse_grid(const Options& o) {
  std::vector<GridPoint> grid;
  const std::string spec = o.grid.empty() ? o.sum + "@" + std::to_string(o.hidden) : o.grid;
  for (const auto& entry : split(spec, ',')) {
    const auto at = entry.find('@');
    require(at != std::string::npos, ErrorKind::Config, "grid entry '" + entry + "' lacks @hidden");
    GridPoint p;
    const std::string kind = entry.substr(0, at);
    p.hidden = to_size(entry.substr(at + 1), "grid hidden size");
    if (kind == "dense") {
      p.sum = "dense";
    } else if (kind == "monarch") {
      p.sum = "monarch";
      p.depth = o.depth;
      p.base = o.base;
    } else if (kind.size() > 1 && (kind[0] == 'm' || kind[0] == 'b')) {
      p.sum = "monarch";
      const std::size_t v = to_size(kind.substr(1), "grid entry '" + entry + "'");
      if (kind[0] == 'm') p.depth = v;
      else p.base = v;
    } else {
      raise(ErrorKind::Config, "unknown grid entry '" + entry + "'");
    }
    grid.push_back(p);
  }
  require(!grid.empty(), ErrorKind::Config, "empty grid");
  return grid;
}

std::string csv_safe(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n') c = ';';
  }
  return s;
}

int cmd_sweep_scaling(const Options& o, std::ostream& out) {
  const DatasetShard data = load_data(o, o.data, "--data");
  require(data.items > 0, ErrorKind::Data, "training data has no items");
  const DatasetShard eval = o.eval_data.empty() ? data : load_data(o, o.eval_data, "--eval-data");
  const EMConfig cfg = em_config(o);
  std::optional<ChowLiuTree> tree;
  if (o.arch == "hclt") tree = chow_liu(data, data.vocab);
  std::ostringstream csv;
  csv << "arch,sum,hidden,depth,flops_per_token,parameters,train_bpc,eval_bpc,status\n";
  for (const GridPoint& p : parse_grid(o)) {
    csv << o.arch << "," << p.sum << "," << p.hidden << ",";
    try {
      const SumSpec spec = sum_spec(p.sum, p.hidden, p.depth, p.base);
      CircuitGraph g = build_model(o, data, p.hidden, spec, o.seed, tree);
      const TrainLog log = train(g, data, cfg);
      const double ell = total_log_likelihood(g, eval);
      csv << (p.sum == "dense" ? 1 : spec.schedule.depth()) << "," << hidden_flops(g) << "," << parameter_count(g)
          << "," << num(log.records.back().bpc) << "," << num(bits_per_dim(ell, eval.items * eval.variables))
          << ",ok\n";
    } catch (const Error& e) {
      csv << ",,,,,error: " << to_string(e.kind()) << ": " << csv_safe(e.what()) << "\n";
    }
  }
  if (o.out.empty()) out << csv.str();
  else write_text(out_dir(o) / "scaling.csv", csv.str());
  return kOk;
}

int cmd_sweep_prune(const Options& o, std::ostream& out) {
  const CircuitGraph g = load_model(o.checkpoint);
  const DatasetShard calib = load_data(o, o.data, "--data");
  const DatasetShard eval = o.eval_data.empty() ? calib : load_data(o, o.eval_data, "--eval-data");
  check_shape(g, calib);
  check_shape(g, eval);
  const double base = total_log_likelihood(g, eval);
  std::ostringstream csv;
  csv << "keep,log_likelihood,delta,bpc\n";
  for (const auto& f : split(o.fractions, ',')) {
    const double keep = to_double(f, "fraction");
    const double ll = total_log_likelihood(prune_hidden_states(g, keep, calib), eval);
    csv << num(keep) << "," << num(ll) << "," << num(ll - base) << ","
        << num(bits_per_dim(ll, eval.items * eval.variables)) << "\n";
  }
  if (o.out.empty()) out << csv.str();
  else write_text(out_dir(o) / "prune.csv", csv.str());
  return kOk;
}

int cmd_flops_report(const Options& o, std::ostream& out) {
  const std::uint64_t batch = o.batch ? o.batch : 1;
  std::ostringstream csv;
  csv << "hidden,dense_flops,m2_flops,m3_flops,m4_flops,dense_params,m2_params,m3_params,m4_params,"
         "dense_activations,m2_activations,m3_activations,m4_activations\n";
  for (const auto& s : split(o.sizes, ',')) {
    const std::size_t h = to_size(s, "hidden size");
    std::vector<std::string> flops{std::to_string(dense_flops(h, h))};
    std::vector<std::string> params, acts;
    const auto dense = memory_elements(ModelKind::Dense, h, o.seq_len, batch, 1);
    params.push_back(std::to_string(dense.parameters));
    acts.push_back(std::to_string(dense.activations));
    for (std::size_t d = 2; d <= 4; ++d) {
      try {
        flops.push_back(std::to_string(flops_per_apply(plan_schedule(h, d))));
        const auto m = memory_elements(ModelKind::Monarch, h, o.seq_len, batch, d);
        params.push_back(std::to_string(m.parameters));
        acts.push_back(std::to_string(m.activations));
      } catch (const Error&) {
        flops.push_back("NA");
        params.push_back("NA");
        acts.push_back("NA");
      }
    }
    csv << h;
    for (const auto* col : {&flops, &params, &acts}) {
      for (const auto& v : *col) csv << "," << v;
    }
    csv << "\n";
  }
  if (o.out.empty()) out << csv.str();
  else write_text(out_dir(o) / "flops.csv", csv.str());
  return kOk;
}

int cmd_product_init(const Options& o, std::ostream& out) {
  const DatasetShard data = load_data(o, o.data, "--data");
  require(data.items > 0, ErrorKind::Data, "training data has no items");
  EMConfig cfg = em_config(o);
  cfg.epochs = o.factor_epochs;
  std::vector<FactorConfig> factors;
  for (const auto& f : split(o.factors, ',')) factors.push_back({to_size(f, "factor hidden size"), cfg});
  if (o.factor_epochs == 0) {
    for (auto& f : factors) f.config.epochs = 0;
  }
  std::optional<ChowLiuTree> tree;
  if (o.arch == "hclt") tree = chow_liu(data, data.vocab);
  const FactorBuilder build = [&](std::size_t t, std::size_t h) {
    return build_model(o, data, h, SumSpec::dense(), o.seed + t, tree);
  };
  CircuitGraph g = init_from_product(build, factors, data,
                                     o.arch == "hmm" ? RenormalizeMode::KeepSharing : RenormalizeMode::Exact);
  describe_data(g, o, data);
  const fs::path dir = out_dir(o);
  save_checkpoint(dir / "init.ckpt", g);
  const double ll = total_log_likelihood(g, data);
  out << "hidden=" << param_inputs(g.sum_params().front()) << " parameters=" << parameter_count(g)
      << " train_bpc=" << num(bits_per_dim(ll, data.items * data.variables))
      << " checkpoint=" << (dir / "init.ckpt").string() << "\n";
  return kOk;
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Numeric: return kNumeric;
    case ErrorKind::Domain:
    case ErrorKind::Dimension:
    case ErrorKind::Data:
    case ErrorKind::Io: return kDataError;
    default: return kUsage;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Monarch-parameterized probabilistic circuits: training, evaluation and reports", "moncirc"};
  app.set_config("--config", "", "Config file of key = value lines; command-line flags take precedence");
  app.add_option("command", o.command, "Command to run")
      ->required()
      ->check(CLI::IsMember(
          {"train", "eval", "sample", "sweep-scaling", "sweep-prune", "flops-report", "product-init"}));
  app.add_option("--data", o.data, "Training / evaluation / calibration data");
  app.add_option("--eval-data", o.eval_data, "Held-out data");
  app.add_option("--format", o.format, "Data format")->check(CLI::IsMember({"text", "tokens", "images", "shard"}));
  app.add_option("--color", o.color, "Image color transform (rgb, ycocg-r, ycocg-lossy)");
  app.add_option("--chunk", o.chunk, "Text chunk / token sequence length");
  app.add_option("--vocab", o.vocab, "Token vocabulary size");
  app.add_option("--patch", o.patch, "Image patch size");
  app.add_option("--max-items", o.max_items, "Keep only the first N items");
  app.add_option("--checkpoint", o.checkpoint, "Model checkpoint (input)");
  app.add_option("--out", o.out, "Output directory");
  app.add_option("--arch", o.arch, "Architecture")->check(CLI::IsMember({"hmm", "hclt"}));
  app.add_option("--sum", o.sum, "Sum-block parameterization")->check(CLI::IsMember({"dense", "monarch"}));
  app.add_option("--hidden", o.hidden, "Hidden size");
  app.add_option("--depth", o.depth, "Monarch depth");
  app.add_option("--base", o.base, "Monarch base (every layer dim equal to it)");
  app.add_option("--batch", o.batch, "Mini-batch size");
  app.add_option("--epochs", o.epochs, "Training epochs");
  app.add_option("--schedule", o.schedule, "Step-size schedule")
      ->check(CLI::IsMember({"linear", "cosine", "const"}));
  app.add_option("--eta", o.eta, "Step size of the const schedule");
  app.add_option("--seed", o.seed, "Random seed");
  app.add_option("--count", o.count, "Number of samples");
  app.add_option("--fractions", o.fractions, "Comma-separated keep fractions for sweep-prune");
  app.add_option("--grid", o.grid, "Comma-separated sweep points: dense@H, m<D>@H, b<B>@H");
  app.add_option("--factors", o.factors, "Comma-separated factor hidden sizes for product-init");
  app.add_option("--factor-epochs", o.factor_epochs, "Training epochs per factor for product-init");
  app.add_option("--sizes", o.sizes, "Comma-separated hidden sizes for flops-report");
  app.add_option("--seq-len", o.seq_len, "Sequence length for memory accounting");
  app.add_flag("--time", o.time, "Record wall-clock time in training logs");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: config: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (o.command == "train") return cmd_train(o, out);
    if (o.command == "eval") return cmd_eval(o, out);
    if (o.command == "sample") return cmd_sample(o, out);
    if (o.command == "sweep-scaling") return cmd_sweep_scaling(o, out);
    if (o.command == "sweep-prune") return cmd_sweep_prune(o, out);
    if (o.command == "flops-report") return cmd_flops_report(o, out);
    return cmd_product_init(o, out);
  } catch (const Error& e) {
    err << "error: " << to_string(e.kind()) << ": " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
    return kNumeric;
  }
}

}  // namespace moncirc::cli
