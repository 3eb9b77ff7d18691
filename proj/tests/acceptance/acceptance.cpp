// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
// Usage: acceptance [criterion ids...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "circuits.hpp"
#include "moncirc/architectures.hpp"
#include "moncirc/butterfly.hpp"
#include "moncirc/checkpoint.hpp"
#include "moncirc/dataset.hpp"
#include "moncirc/em.hpp"
#include "moncirc/error.hpp"
#include "moncirc/inference.hpp"
#include "moncirc/monarch.hpp"
#include "moncirc/product.hpp"
#include "moncirc/random.hpp"
#include "oracles.hpp"

using namespace moncirc;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  std::function<Outcome()> run;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string fmt4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

double rel_err(const Eigen::VectorXd& got, const Eigen::VectorXd& want) {
  const double scale = std::max(want.norm(), 1e-300);
  return (got - want).norm() / scale;
}

Eigen::VectorXd random_vector(std::size_t n, Rng& rng) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(n));
  for (Eigen::Index k = 0; k < x.size(); ++k) x(k) = 2.0 * rng.uniform() - 1.0;
  return x;
}

Eigen::VectorXd apply(const MonarchFactorization& f, const Eigen::VectorXd& x) {
  const auto y = monarch_apply(f, std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
  return Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
}

Outcome kronecker_law() {
  Rng rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto dim = [&] { return static_cast<Eigen::Index>(rng.below(6) + 1); };
    const std::vector<Eigen::MatrixXd> k{oracle::random_matrix(dim(), dim(), rng, -1.0, 1.0),
                                         oracle::random_matrix(dim(), dim(), rng, -1.0, 1.0)};
    const auto f = MonarchFactorization::kronecker(k);
    if (!f.tied() || f.depth() != 2) return {false, "kronecker() did not give a tied 2-layer factorization"};
    const Eigen::VectorXd x = random_vector(static_cast<std::size_t>(k[0].cols() * k[1].cols()), rng);
    worst = std::max(worst, rel_err(apply(f, x), oracle::kron(k[0], k[1]) * x));
  }
  return {worst <= 1e-12, "max rel err " + fmt(worst) + " over 200 trials"};
}

Outcome multi_kronecker_law() {
  Rng rng(102);
  double worst = 0.0;
  int trials = 0;
  for (std::size_t d = 2; d <= 4; ++d) {
    for (int rep = 0; rep < 100; ++rep, ++trials) {
      std::vector<Eigen::MatrixXd> k;
      Eigen::MatrixXd want = Eigen::MatrixXd::Ones(1, 1);
      for (std::size_t t = 0; t < d; ++t) {
        k.push_back(oracle::random_matrix(static_cast<Eigen::Index>(rng.below(3) + 1),
                                          static_cast<Eigen::Index>(rng.below(3) + 1), rng, -1.0, 1.0));
        want = oracle::kron(want, k.back());
      }
      const auto f = MonarchFactorization::kronecker(k);
      if (!f.tied() || f.depth() != d) return {false, "kronecker() did not give a tied factorization of depth d"};
      const Eigen::VectorXd x = random_vector(static_cast<std::size_t>(want.cols()), rng);
      worst = std::max(worst, rel_err(apply(f, x), want * x));
    }
  }
  return {worst <= 1e-12, "max rel err " + fmt(worst) + " over " + std::to_string(trials) + " trials, d in 2..4"};
}

// Block-diagonal with blocks of D / 2^{i-1}; inside a block the four quadrants are diagonal.
bool pattern_oracle(std::size_t i, std::size_t D, std::size_t r, std::size_t c) {
  const std::size_t block = D >> (i - 1), half = block / 2;
  return r / block == c / block && (r % block) % half == (c % block) % half;
}

Outcome butterfly_theorem() {
  Rng rng(103);
  double worst = 0.0;
  std::size_t bad_patterns = 0;
  for (std::size_t d : {2u, 3u, 4u}) {
    const std::size_t D = std::size_t{1} << d;
    for (int rep = 0; rep < 50; ++rep) {
      std::vector<BinaryTensor> factors;
      Eigen::SparseMatrix<double, Eigen::RowMajor> product(static_cast<Eigen::Index>(D), static_cast<Eigen::Index>(D));
      product.setIdentity();
      for (std::size_t i = 1; i <= d; ++i) {
        auto a = BinaryTensor::zeros(d + 1);
        for (double& v : a.values) v = 2.0 * rng.uniform() - 1.0;
        const auto f = butterfly_unfurl(a, i);
        if (f.structural_nonzeros() != 2 * D) ++bad_patterns;
        for (int k = 0; k < f.matrix.outerSize(); ++k) {
          for (decltype(f.matrix)::InnerIterator it(f.matrix, k); it; ++it) {
            if (!pattern_oracle(i, D, static_cast<std::size_t>(it.row()), static_cast<std::size_t>(it.col()))) {
              ++bad_patterns;
            }
          }
        }
        product = (product * f.matrix).pruned(0.0, 0.0);
        factors.push_back(std::move(a));
      }
      const Eigen::MatrixXd want = Eigen::MatrixXd(product);
      const Eigen::MatrixXd got = materialize_butterfly(butterfly_as_monarch(factors));
      worst = std::max(worst, (got - want).cwiseAbs().maxCoeff());
    }
  }
  return {worst <= 1e-12 && bad_patterns == 0,
          "max entry err " + fmt(worst) + ", pattern violations " + std::to_string(bad_patterns) +
              " over 150 factor sets, D in {4,8,16}"};
}

// Edge count of the Monarch realization of W_1 (x) ... (x) W_d contracting W_1 first:
// layer t sees outputs of the earlier factors and inputs of the later ones.
std::uint64_t product_edges(const std::vector<const DenseWeights*>& ws) {
  std::uint64_t total = 0;
  for (std::size_t t = 0; t < ws.size(); ++t) {
    std::uint64_t e = static_cast<std::uint64_t>(ws[t]->rows() * ws[t]->cols());
    for (std::size_t u = 0; u < ws.size(); ++u) {
      if (u < t) e *= static_cast<std::uint64_t>(ws[u]->rows());
      if (u > t) e *= static_cast<std::uint64_t>(ws[u]->cols());
    }
    total += e;
  }
  return total;
}

Outcome circuit_product_identity() {
  Rng rng(104);
  double worst = 0.0;
  std::size_t edge_mismatch = 0, checked_blocks = 0, cases = 0;
  for (std::size_t d : {2u, 3u}) {
    for (std::size_t n = 1; n <= 4; ++n) {
      for (std::size_t V = 2; V <= 3; ++V) {
        for (int rep = 0; rep < 3; ++rep, ++cases) {
          std::vector<CircuitGraph> factors;
          for (std::size_t t = 0; t < d; ++t) {
            const std::size_t h = rng.below(3) + 1;
            factors.push_back(build_hmm({n, h, V, SumSpec::dense(), rep != 2}, rng.below(1u << 30)));
          }
          const auto prod = multiply(factors);
          oracle::for_each_assignment(n, V, [&](std::span<const std::int32_t> x) {
            double want = 1.0;
            for (const auto& f : factors) want *= std::exp(evaluate_log(f, x));
            const double got = std::exp(evaluate_log(prod, x));
            worst = std::max(worst, std::abs(got - want) / want);
          });
          for (BlockId id = 0; id < prod.num_blocks(); ++id) {
            if (prod.block(id).kind != BlockKind::Sum) continue;
            std::vector<const DenseWeights*> ws;
            for (const auto& f : factors) ws.push_back(&std::get<DenseWeights>(f.sum_params()[f.block(id).param]));
            ++checked_blocks;
            if (param_flops(prod.sum_params()[prod.block(id).param]) != product_edges(ws)) ++edge_mismatch;
          }
        }
      }
    }
  }
  return {worst <= 1e-12 && edge_mismatch == 0,
          "max rel err " + fmt(worst) + " over " + std::to_string(cases) + " products; edge counts " +
              std::to_string(checked_blocks - edge_mismatch) + "/" + std::to_string(checked_blocks) +
              " equal rpq + srq"};
}

Outcome hmm_forward_equivalence() {
  Rng rng(105);
  double worst = 0.0;
  std::size_t models = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    for (std::size_t h = 1; h <= 4; ++h) {
      for (std::size_t V = 2; V <= 3; ++V) {
        for (int rep = 0; rep < 2; ++rep, ++models) {
          const auto hmm = oracle::random_hmm(h, V, rng);
          auto g = build_hmm({n, h, V, SumSpec::dense(), true});
          oracle::load_hmm(g, hmm);
          oracle::for_each_assignment(n, V, [&](std::span<const std::int32_t> x) {
            worst = std::max(worst, std::abs(evaluate_log(g, x) - oracle::forward_log(hmm, x)));
          });
        }
      }
    }
  }
  return {worst <= 1e-10, "max |log p diff| " + fmt(worst) + " over " + std::to_string(models) + " HMMs"};
}

std::vector<std::pair<std::string, CircuitGraph>> normalized_circuits() {
  std::vector<std::pair<std::string, CircuitGraph>> all;
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    for (auto& entry : fixtures::small_zoo(seed)) all.push_back(std::move(entry));
  }
  Rng rng(106);
  auto hmm = build_hmm({4, 3, 3, SumSpec::dense(), true});
  oracle::load_hmm(hmm, oracle::random_hmm(3, 3, rng));
  all.emplace_back("hmm-oracle", std::move(hmm));
  return all;
}

Outcome normalization() {
  double mass_err = 0.0, marg_err = 0.0;
  std::size_t queries = 0;
  Rng rng(107);
  const auto circuits = normalized_circuits();
  for (const auto& [name, g] : circuits) {
    const std::size_t n = g.num_variables(), V = g.vocab(0);
    std::vector<double> joint;
    oracle::for_each_assignment(n, V, [&](std::span<const std::int32_t> x) { joint.push_back(std::exp(evaluate_log(g, x))); });
    mass_err = std::max(mass_err, std::abs(std::accumulate(joint.begin(), joint.end(), 0.0) - 1.0));
    // Brute-force completion sums for every evidence pattern over random values.
    for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
      std::map<std::size_t, std::int32_t> evidence;
      for (std::size_t v = 0; v < n; ++v) {
        if (mask >> v & 1u) evidence[v] = static_cast<std::int32_t>(rng.below(V));
      }
      double want = 0.0;
      std::size_t k = 0;
      oracle::for_each_assignment(n, V, [&](std::span<const std::int32_t> x) {
        bool match = true;
        for (const auto& [v, s] : evidence) match = match && x[v] == s;
        if (match) want += joint[k];
        ++k;
      });
      marg_err = std::max(marg_err, std::abs(std::exp(marginalize_log(g, evidence)) - want));
      ++queries;
    }
  }
  return {mass_err <= 1e-9 && marg_err <= 1e-8,
          "max |sum - 1| " + fmt(mass_err) + " over " + std::to_string(circuits.size()) +
              " circuits; max marginal err " + fmt(marg_err) + " over " + std::to_string(queries) + " queries"};
}

Outcome em_monotonicity() {
  std::vector<std::pair<std::string, CircuitGraph>> models, sources;
  for (std::uint64_t seed : {21u, 22u}) {
    for (auto& e : fixtures::small_zoo(seed)) models.push_back(std::move(e));
    for (auto& e : fixtures::small_zoo(seed + 100)) sources.push_back(std::move(e));
  }
  models.resize(10);
  double worst_drop = 0.0;
  std::size_t steps = 0;
  for (std::size_t k = 0; k < models.size(); ++k) {
    auto& g = models[k].second;
    const auto data = sample_batch(sources[k].second, 300, 500 + k);
    double prev = -INFINITY;
    for (int it = 0; it <= 20; ++it) {
      const double ll = it < 20 ? em_full_step(g, data) : total_log_likelihood(g, data);
      if (it > 0) worst_drop = std::max(worst_drop, prev - ll);
      prev = ll;
      steps += it > 0;
    }
  }
  return {worst_drop <= 1e-9, "largest LL decrease " + fmt(worst_drop) + " over " + std::to_string(steps) +
                                  " steps on 10 circuits"};
}

Outcome flops_table() {
  struct Row {
    std::size_t h;
    std::uint64_t dense, m2, m3, m4;
  };
  const Row table[] = {{4096, 16777216, 524288, 196608, 131072},
                       {8192, 67108864, 1572864, 524288, 327680},
                       {16384, 268435456, 4194304, 1310720, 786432},
                       {32768, 1073741824, 12582912, 3145728, 1835008}};
  int ok = 0;
  std::string bad;
  for (const auto& r : table) {
    const std::uint64_t got[] = {dense_flops(r.h, r.h), flops_per_apply(plan_schedule(r.h, 2)),
                                 flops_per_apply(plan_schedule(r.h, 3)), flops_per_apply(plan_schedule(r.h, 4))};
    const std::uint64_t want[] = {r.dense, r.m2, r.m3, r.m4};
    for (int c = 0; c < 4; ++c) {
      if (got[c] == want[c]) ++ok;
      else bad += " h=" + std::to_string(r.h) + " col " + std::to_string(c) + " got " + std::to_string(got[c]);
    }
  }
  return {ok == 16, std::to_string(ok) + "/16 cells equal" + bad};
}

Outcome ycocg_lossless() {
  Rng rng(109);
  std::size_t exact = 0, valid = 0, exact_inv = 0;
  const std::size_t trials = 100000;
  for (std::size_t k = 0; k < trials; ++k) {
    const int r = static_cast<int>(rng.below(256)), g = static_cast<int>(rng.below(256)),
              b = static_cast<int>(rng.below(256));
    const auto c = ycocg_r_forward(r, g, b);
    const auto back = ycocg_r_inverse(c.y, c.co, c.cg);
    exact += back.r == r && back.g == g && back.b == b;
    // Random chroma triples: those that decode to a pixel must re-encode exactly.
    const int y = static_cast<int>(rng.below(256)), co = static_cast<int>(rng.below(511)) - 255,
              cg = static_cast<int>(rng.below(511)) - 255;
    try {
      const auto p = ycocg_r_inverse(y, co, cg);
      ++valid;
      const auto again = ycocg_r_forward(p.r, p.g, p.b);
      exact_inv += again.y == y && again.co == co && again.cg == cg;
    } catch (const Error&) {
    }
  }
  return {exact == trials && exact_inv == valid && valid > 0,
          "inverse(forward) exact " + std::to_string(exact) + "/" + std::to_string(trials) +
              "; forward(inverse) exact " + std::to_string(exact_inv) + "/" + std::to_string(valid) +
              " decodable triples"};
}

struct Split {
  DatasetShard train, eval;
};

Split text_split(std::size_t train_bytes, std::size_t eval_bytes, std::size_t chunk, std::uint64_t seed,
                 std::size_t lexicon = 240) {
  const std::string text = oracle::toy_corpus(train_bytes + eval_bytes, seed, lexicon);
  const auto bytes = [](const std::string& s) {
    return std::vector<std::uint8_t>(s.begin(), s.end());
  };
  const auto tr = bytes(text.substr(0, train_bytes));
  const auto ev = bytes(text.substr(train_bytes));
  return {load_text_chunks(tr, chunk), load_text_chunks(ev, chunk)};
}

double final_eval_bpc(const TrainLog& log) {
  for (auto it = log.records.rbegin(); it != log.records.rend(); ++it) {
    if (it->split == "eval") return it->bpc;
  }
  return NAN;
}

Outcome product_init_trend() {
  const std::size_t chunk = 128;
  const auto data = text_split(200000, 40000, chunk, 210);
  const std::vector<std::size_t> dims{4, 4, 4};
  double sum_prod = 0.0, sum_rand = 0.0;
  int wins = 0;
  std::string per_seed;
  // Full-batch EM: each epoch is one exact EM step, so both arms get 20 identical-cost steps.
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    EMConfig cfg;
    cfg.batch_size = data.train.items;
    cfg.epochs = 20;
    cfg.schedule = Schedule::Constant;
    cfg.eta = 1.0;
    cfg.seed = seed;
    EMConfig factor_cfg = cfg;
    factor_cfg.epochs = 3;
    std::vector<FactorConfig> factors;
    for (std::size_t h : dims) factors.push_back({h, factor_cfg});
    const FactorBuilder build = [&](std::size_t index, std::size_t hidden) {
      return build_hmm({chunk, hidden, kTextVocab, SumSpec::dense(), true}, seed * 100 + index);
    };
    auto product = init_from_product(build, factors, data.train);
    auto random = build_hmm({chunk, 64, kTextVocab, SumSpec::monarch(plan_schedule_dims(64, dims)), true}, seed);
    const double bp = final_eval_bpc(train(product, data.train, cfg, &data.eval));
    const double br = final_eval_bpc(train(random, data.train, cfg, &data.eval));
    sum_prod += bp;
    sum_rand += br;
    wins += bp <= br;
    per_seed += " " + fmt4(bp) + "/" + fmt4(br);
  }
  const double mp = sum_prod / 5.0, mr = sum_rand / 5.0;
  return {mp <= mr, "mean eval BPC product-init " + fmt4(mp) + " vs random-init " + fmt4(mr) + " (" +
                        std::to_string(wins) + "/5 seeds won; per seed" + per_seed + ")"};
}

Outcome scaling_trend() {
  const std::size_t chunk = 128;
  // A 64-word lexicon keeps the corpus within reach of h = 1024 at this budget.
  const auto data = text_split(200000, 40000, chunk, 211, 64);
  EMConfig cfg;
  cfg.batch_size = 32;
  cfg.epochs = 5;
  cfg.seed = 3;
  const auto fit = [&](std::size_t h, const SumSpec& sum) {
    auto g = build_hmm({chunk, h, kTextVocab, sum, true}, 7);
    return final_eval_bpc(train(g, data.train, cfg, &data.eval));
  };
  std::vector<double> monarch;
  std::string curve;
  for (std::size_t h = 16; h <= 1024; h *= 2) {
    monarch.push_back(fit(h, SumSpec::monarch(plan_schedule(h, 2))));
    curve += " " + std::to_string(h) + ":" + fmt4(monarch.back());
  }
  int inversions = 0;
  bool small_inversions = true;
  for (std::size_t k = 1; k < monarch.size(); ++k) {
    if (monarch[k] >= monarch[k - 1]) {
      ++inversions;
      small_inversions = small_inversions && monarch[k] - monarch[k - 1] <= 0.01;
    }
  }
  const double gap_small = monarch.front() - fit(16, SumSpec::dense());
  const double gap_large = monarch.back() - fit(1024, SumSpec::dense());
  const bool monotone = inversions == 0 || (inversions == 1 && small_inversions);
  return {monotone && gap_large <= gap_small,
          "Monarch-2 eval BPC" + curve + "; inversions " + std::to_string(inversions) + "; dense gap h=16 " +
              fmt4(gap_small) + ", h=1024 " + fmt4(gap_large)};
}

Outcome pruning_behavior() {
  const std::size_t chunk = 32;
  const auto data = text_split(20000, 4000, chunk, 212);
  const std::vector<double> pruned{0.0, 0.1, 0.25, 0.5, 0.75, 0.9};
  bool monotone = true;
  std::string curves;
  const SumSpec specs[] = {SumSpec::dense(), SumSpec::monarch(plan_schedule(32, 2))};
  for (const auto& spec : specs) {
    auto g = build_hmm({chunk, 32, kTextVocab, spec, true}, 5);
    EMConfig cfg;
    cfg.batch_size = 32;
    cfg.epochs = 4;
    train(g, data.train, cfg);
    double prev = INFINITY;
    curves += spec.kind == SumKind::Dense ? " dense:" : " monarch:";
    for (double f : pruned) {
      const double ll = total_log_likelihood(prune_hidden_states(g, 1.0 - f, data.train), data.eval);
      monotone = monotone && ll <= prev + 1e-9 * std::abs(ll);
      prev = ll;
      curves += " " + fmt(ll);
    }
  }
  // States 2k and 2k+1 duplicate state k of a 2-state model but receive almost no mass.
  double worst_loss = -INFINITY;
  Rng rng(112);
  for (int rep = 0; rep < 5; ++rep) {
    const auto h = oracle::random_hmm(2, 3, rng);
    const double eps = 1e-12;
    oracle::Hmm big;
    big.pi = Eigen::VectorXd(4);
    big.pi << h.pi(0) * (1 - eps), h.pi(1) * (1 - eps), h.pi(0) * eps, h.pi(1) * eps;
    big.T = Eigen::MatrixXd(4, 4);
    big.E = Eigen::MatrixXd(4, 3);
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 2; ++j) {
        big.T(i, j) = h.T(i % 2, j) * (1 - eps);
        big.T(i, j + 2) = h.T(i % 2, j) * eps;
      }
      big.E.row(i) = h.E.row(i % 2);
    }
    auto g = build_hmm({6, 4, 3, SumSpec::dense(), true});
    oracle::load_hmm(g, big);
    const auto sample_data = sample_batch(g, 200, 40 + static_cast<std::uint64_t>(rep));
    const double loss =
        total_log_likelihood(g, sample_data) - total_log_likelihood(prune_hidden_states(g, 0.5, sample_data), sample_data);
    worst_loss = std::max(worst_loss, loss);
  }
  return {monotone && worst_loss <= 1e-6, std::string("held-out LL by pruned fraction") + curves +
                                              (monotone ? " (monotone)" : " (NOT monotone)") +
                                              "; redundant model LL loss at 50% " + fmt(worst_loss)};
}

std::pair<std::string, std::string> training_run(const Split& data) {
  auto g = build_hmm({64, 16, kTextVocab, SumSpec::monarch(plan_schedule(16, 2)), true}, 9);
  EMConfig cfg;
  cfg.batch_size = 16;
  cfg.epochs = 2;
  cfg.seed = 17;
  const auto log = train(g, data.train, cfg, &data.eval);
  return {log.to_csv(), serialize_checkpoint(g)};
}

Outcome determinism() {
  const auto data = text_split(30000, 5000, 64, 213);
  bool same = true;
  std::string detail;
  std::vector<std::pair<std::string, std::string>> first;
  for (const char* workers : {"1", "2"}) {
    ::setenv("MC_WORKERS", workers, 1);
    const auto a = training_run(data), b = training_run(data);
    const bool eq = a == b;
    same = same && eq;
    detail += std::string(detail.empty() ? "" : "; ") + "MC_WORKERS=" + workers + (eq ? " identical" : " DIFFER");
    first.push_back(a);
  }
  ::unsetenv("MC_WORKERS");
  detail += first[0] == first[1] ? "; also identical across worker counts" : "; differs across worker counts";
  return {same, "CSV and checkpoint bytes: " + detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "Kronecker law", kronecker_law},
      {2, "Multi-Kronecker law", multi_kronecker_law},
      {3, "Butterfly theorem", butterfly_theorem},
      {4, "Circuit-product identity", circuit_product_identity},
      {5, "HMM-forward equivalence", hmm_forward_equivalence},
      {6, "Normalization", normalization},
      {7, "EM monotonicity", em_monotonicity},
      {8, "FLOPs table reproduction", flops_table},
      {9, "YCoCg-R losslessness", ycocg_lossless},
      {10, "Init-from-product trend", product_init_trend},
      {11, "Scaling trend", scaling_trend},
      {12, "Pruning behavior", pruning_behavior},
      {13, "Determinism", determinism},
  };
  std::set<int> only;
  for (int k = 1; k < argc; ++k) only.insert(std::atoi(argv[k]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail << " ("
              << fmt(secs) << " s)" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
