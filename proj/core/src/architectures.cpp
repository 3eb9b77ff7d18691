#include "moncirc/architectures.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "moncirc/error.hpp"
#include "moncirc/inference.hpp"

namespace moncirc {

namespace {

SumParam uniform_dense(std::size_t out, std::size_t in) {
  return DenseWeights{Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in),
                                                1.0 / static_cast<double>(in))};
}

SumParam hidden_param(const SumSpec& spec, std::size_t hidden) {
  if (spec.kind == SumKind::Dense) return uniform_dense(hidden, hidden);
  MonarchFactorization f = make_monarch(spec.schedule);
  for (std::size_t t = 0; t < f.depth(); ++t) {
    auto layer = f.layer(t);
    std::fill(layer.begin(), layer.end(), 1.0 / static_cast<double>(f.layer_in(t)));
  }
  return f;
}

void check_sum_spec(const SumSpec& sum, std::size_t hidden) {
  if (sum.kind == SumKind::Monarch) {
    std::size_t prod = 1;
    for (std::size_t d : sum.schedule.dims) prod *= d;
    require(!sum.schedule.dims.empty() && prod == hidden && sum.schedule.hidden == hidden, ErrorKind::Config,
            "monarch schedule covers " + std::to_string(prod) + " states, model has " + std::to_string(hidden));
  }
}

void describe_sum(CircuitGraph& g, const SumSpec& sum) {
  g.metadata["sum"] = sum.kind == SumKind::Dense ? "dense" : "monarch";
  if (sum.kind == SumKind::Monarch) {
    std::string dims;
    for (std::size_t k = 0; k < sum.schedule.dims.size(); ++k) {
      if (k) dims += "x";
      dims += std::to_string(sum.schedule.dims[k]);
    }
    g.metadata["dims"] = dims;
  }
}

}  // namespace

void HmmSpec::check() const {
  require(length >= 1, ErrorKind::Config, "HMM length must be at least 1");
  require(hidden >= 1, ErrorKind::Config, "HMM hidden size must be at least 1");
  require(vocab >= 2, ErrorKind::Config, "HMM vocabulary must be at least 2");
  check_sum_spec(sum, hidden);
}

CircuitGraph build_hmm(const HmmSpec& spec, std::optional<std::uint64_t> seed) {
  spec.check();
  const std::size_t n = spec.length, h = spec.hidden;
  std::vector<Block> blocks;
  std::vector<LeafTable> leaves;
  std::vector<SumParam> sums;

  auto leaf_table = [&](std::size_t t) -> std::size_t {
    if (spec.homogeneous && !leaves.empty()) return 0;
    leaves.push_back(LeafTable::uniform(h, spec.vocab));
    (void)t;
    return leaves.size() - 1;
  };
  std::optional<std::size_t> shared_transition;
  auto transition = [&]() -> std::size_t {
    if (spec.homogeneous && shared_transition) return *shared_transition;
    sums.push_back(hidden_param(spec.sum, h));
    if (spec.homogeneous) shared_transition = sums.size() - 1;
    return sums.size() - 1;
  };

  blocks.push_back(Block::leaf(n - 1, h, leaf_table(n - 1)));
  BlockId next = blocks.size() - 1;
  for (std::size_t t = n - 1; t-- > 0;) {
    blocks.push_back(Block::sum({next}, h, transition()));
    const BlockId msg = blocks.size() - 1;
    blocks.push_back(Block::leaf(t, h, leaf_table(t)));
    const BlockId leaf = blocks.size() - 1;
    blocks.push_back(Block::hadamard({leaf, msg}, h));
    next = blocks.size() - 1;
  }
  sums.push_back(uniform_dense(1, h));
  blocks.push_back(Block::sum({next}, 1, sums.size() - 1));
  const BlockId root = blocks.size() - 1;

  CircuitGraph g(std::move(blocks), root, std::move(leaves), std::move(sums), true);
  if (seed) randomize_parameters(g, *seed);
  g.metadata["arch"] = "hmm";
  g.metadata["length"] = std::to_string(n);
  g.metadata["hidden"] = std::to_string(h);
  g.metadata["vocab"] = std::to_string(spec.vocab);
  g.metadata["homogeneous"] = spec.homogeneous ? "1" : "0";
  describe_sum(g, spec.sum);
  return g;
}

std::vector<std::vector<std::size_t>> ChowLiuTree::children() const {
  std::vector<std::vector<std::size_t>> out(variables);
  for (std::size_t v = 0; v < variables; ++v) {
    if (parent[v] >= 0) out[static_cast<std::size_t>(parent[v])].push_back(v);
  }
  return out;
}

std::vector<std::size_t> ChowLiuTree::post_order() const {
  const auto kids = children();
  std::vector<std::size_t> order;
  order.reserve(variables);
  std::vector<std::pair<std::size_t, std::size_t>> stack{{root, 0}};
  while (!stack.empty()) {
    auto& [v, next] = stack.back();
    if (next < kids[v].size()) {
      const std::size_t c = kids[v][next++];
      stack.emplace_back(c, 0);
    } else {
      order.push_back(v);
      stack.pop_back();
    }
  }
  return order;
}

std::vector<std::pair<std::size_t, std::size_t>> ChowLiuTree::edges() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t v = 0; v < variables; ++v) {
    if (parent[v] >= 0) {
      const auto p = static_cast<std::size_t>(parent[v]);
      out.emplace_back(std::min(v, p), std::max(v, p));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

void ChowLiuTree::check() const {
  require(variables >= 1 && parent.size() == variables && weight.size() == variables && root < variables,
          ErrorKind::Contract, "tree arrays do not match the variable count");
  require(parent[root] == -1, ErrorKind::Contract, "tree root has a parent");
  for (std::size_t v = 0; v < variables; ++v) {
    require(v == root || (parent[v] >= 0 && static_cast<std::size_t>(parent[v]) < variables), ErrorKind::Contract,
            "variable " + std::to_string(v) + " has an invalid parent");
  }
  require(post_order().size() == variables, ErrorKind::Contract, "parent array is not a connected tree");
}

CircuitGraph build_hclt(const ChowLiuTree& tree, std::size_t hidden, std::size_t vocab, const SumSpec& sum,
                        std::optional<std::uint64_t> seed) {
  tree.check();
  require(hidden >= 1, ErrorKind::Config, "hidden size must be at least 1");
  require(vocab >= 2, ErrorKind::Config, "vocabulary must be at least 2");
  check_sum_spec(sum, hidden);
  const auto kids = tree.children();
  std::vector<Block> blocks;
  std::vector<LeafTable> leaves;
  std::vector<SumParam> sums;
  std::vector<BlockId> node(tree.variables);
  for (std::size_t v : tree.post_order()) {
    leaves.push_back(LeafTable::uniform(hidden, vocab));
    blocks.push_back(Block::leaf(v, hidden, leaves.size() - 1));
    std::vector<BlockId> parts{blocks.size() - 1};
    for (std::size_t c : kids[v]) {
      sums.push_back(hidden_param(sum, hidden));
      blocks.push_back(Block::sum({node[c]}, hidden, sums.size() - 1));
      parts.push_back(blocks.size() - 1);
    }
    if (parts.size() > 1) blocks.push_back(Block::hadamard(parts, hidden));
    node[v] = blocks.size() - 1;
  }
  sums.push_back(uniform_dense(1, hidden));
  blocks.push_back(Block::sum({node[tree.root]}, 1, sums.size() - 1));
  const BlockId root = blocks.size() - 1;
  CircuitGraph g(std::move(blocks), root, std::move(leaves), std::move(sums), true);
  if (seed) randomize_parameters(g, *seed);
  g.metadata["arch"] = "hclt";
  g.metadata["hidden"] = std::to_string(hidden);
  g.metadata["vocab"] = std::to_string(vocab);
  std::string parents;
  for (std::size_t v = 0; v < tree.variables; ++v) {
    if (v) parents += ",";
    parents += std::to_string(tree.parent[v]);
  }
  g.metadata["tree_parents"] = parents;
  describe_sum(g, sum);
  return g;
}

namespace {

// Indices of the `keep` largest masses (ties: lower index first).
std::vector<bool> top_states(const std::vector<double>& mass, std::size_t keep) {
  std::vector<std::size_t> order(mass.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mass[a] > mass[b]; });
  std::vector<bool> alive(mass.size(), false);
  for (std::size_t k = 0; k < keep && k < order.size(); ++k) alive[order[k]] = true;
  return alive;
}

// Zeroes dead entries of a row and renormalizes; a row left empty keeps the
// entry of its best surviving-candidate column instead.
void prune_row(std::span<double> row, const std::vector<bool>& alive_col, const std::vector<double>& col_mass) {
  double s = 0.0;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (alive_col[i]) s += row[i];
  }
  if (s <= 0.0) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < row.size(); ++i) {
      if (row[i] > 0.0 && (row[best] <= 0.0 || col_mass[i] > col_mass[best])) best = i;
    }
    for (std::size_t i = 0; i < row.size(); ++i) row[i] = i == best ? 1.0 : 0.0;
    return;
  }
  for (std::size_t i = 0; i < row.size(); ++i) row[i] = alive_col[i] ? row[i] / s : 0.0;
}

}  // namespace

CircuitGraph prune_hidden_states(const CircuitGraph& circuit, double keep, const DatasetShard& calibration) {
  require(keep > 0.0 && keep <= 1.0, ErrorKind::Config, "keep fraction must lie in (0, 1]");
  CircuitGraph out = circuit;
  if (keep == 1.0) return out;
  const FlowTable table = flows(circuit, calibration);
  for (std::size_t p = 0; p < out.sum_params().size(); ++p) {
    SumParam& param = out.sum_params()[p];
    if (std::holds_alternative<IdentityMap>(param)) continue;
    const std::vector<double>& mass = table.sums[p].inputs[0];
    const std::size_t n = mass.size();
    const auto kept = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(keep * static_cast<double>(n) - 1e-9)));
    if (kept >= n) continue;
    const std::vector<bool> alive = top_states(mass, kept);
    if (auto* d = std::get_if<DenseWeights>(&param)) {
      std::vector<double> row(n);
      for (Eigen::Index j = 0; j < d->w.rows(); ++j) {
        for (std::size_t i = 0; i < n; ++i) row[i] = d->w(j, static_cast<Eigen::Index>(i));
        prune_row(row, alive, mass);
        for (std::size_t i = 0; i < n; ++i) d->w(j, static_cast<Eigen::Index>(i)) = row[i];
      }
    } else if (auto* f = std::get_if<MonarchFactorization>(&param)) {
      f->untie();
      const std::size_t mo = f->layer_out(0), ni = f->layer_in(0), R = f->layer_batch(0);
      std::vector<bool> slice_alive(ni);
      std::vector<double> slice_mass(ni);
      for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t i = 0; i < ni; ++i) {
          slice_alive[i] = alive[i * R + r];
          slice_mass[i] = mass[i * R + r];
        }
        auto slice = f->slice(0, r);
        for (std::size_t j = 0; j < mo; ++j) prune_row(slice.subspan(j * ni, ni), slice_alive, slice_mass);
      }
    }
  }
  out.metadata["pruned_keep"] = std::to_string(keep);
  return out;
}

}  // namespace moncirc
