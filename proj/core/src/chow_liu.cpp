#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include "moncirc/architectures.hpp"
#include "moncirc/error.hpp"

namespace moncirc {

namespace {

struct DisjointSets {
  std::vector<std::size_t> parent;
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[std::max(a, b)] = std::min(a, b);
    return true;
  }
};

// Pair counts are sparse (at most one cell per item), so only touched cells
// are visited; the untouched cells all share the smoothed mass 1 / (N + V^2)
// and are summed in closed form.
class PairCounter {
 public:
  explicit PairCounter(std::size_t vocab) : V_(vocab), cells_(vocab * vocab, 0) {}

  double mutual_information(const DatasetShard& data, std::size_t i, std::size_t j,
                            const std::vector<std::vector<double>>& marginal_counts) {
    // A variable observed at a single value carries no information; smoothing
    // alone would report a small positive score for it.
    const auto constant = [&](std::size_t v) {
      return std::count_if(marginal_counts[v].begin(), marginal_counts[v].end(), [](double c) { return c > 0; }) <= 1;
    };
    if (constant(i) || constant(j)) return 0.0;
    touched_.clear();
    for (std::size_t n = 0; n < data.items; ++n) {
      const std::size_t cell = static_cast<std::size_t>(data.at(n, i)) * V_ + static_cast<std::size_t>(data.at(n, j));
      if (cells_[cell]++ == 0) touched_.push_back(cell);
    }
    const double V = static_cast<double>(V_);
    const double denom = static_cast<double>(data.items) + V * V;
    std::vector<double> log_pi(V_), log_pj(V_);
    double sum_log_pi = 0.0, sum_log_pj = 0.0;
    for (std::size_t a = 0; a < V_; ++a) {
      log_pi[a] = std::log((marginal_counts[i][a] + V) / denom);
      log_pj[a] = std::log((marginal_counts[j][a] + V) / denom);
      sum_log_pi += log_pi[a];
      sum_log_pj += log_pj[a];
    }
    std::sort(touched_.begin(), touched_.end());
    const double p0 = 1.0 / denom;
    const double log_p0 = std::log(p0);
    double mi = 0.0;
    double zero_cells = V * V;
    double zero_log_marg = V * sum_log_pi + V * sum_log_pj;
    for (std::size_t cell : touched_) {
      const std::size_t a = cell / V_, b = cell % V_;
      const double p = (static_cast<double>(cells_[cell]) + 1.0) / denom;
      mi += p * (std::log(p) - log_pi[a] - log_pj[b]);
      zero_cells -= 1.0;
      zero_log_marg -= log_pi[a] + log_pj[b];
      cells_[cell] = 0;
    }
    mi += p0 * (zero_cells * log_p0 - zero_log_marg);
    return std::max(0.0, mi);
  }

 private:
  std::size_t V_;
  std::vector<std::uint32_t> cells_;
  std::vector<std::size_t> touched_;
};

std::vector<std::vector<double>> marginal_counts(const DatasetShard& data, std::size_t vocab) {
  std::vector<std::vector<double>> counts(data.variables, std::vector<double>(vocab, 0.0));
  for (std::size_t n = 0; n < data.items; ++n) {
    for (std::size_t v = 0; v < data.variables; ++v) {
      const std::int32_t s = data.at(n, v);
      require(s >= 0 && static_cast<std::size_t>(s) < vocab, ErrorKind::Data,
              "value " + std::to_string(s) + " outside vocabulary " + std::to_string(vocab));
      counts[v][static_cast<std::size_t>(s)] += 1.0;
    }
  }
  return counts;
}

}  // namespace

double smoothed_mutual_information(const DatasetShard& data, std::size_t i, std::size_t j, std::size_t vocab) {
  require(i < data.variables && j < data.variables, ErrorKind::Domain, "variable index out of range");
  PairCounter counter(vocab);
  return counter.mutual_information(data, i, j, marginal_counts(data, vocab));
}

ChowLiuTree chow_liu(const DatasetShard& data, std::size_t vocab) {
  require(data.variables >= 2, ErrorKind::Contract, "chow_liu needs at least two variables");
  require(data.items >= 1, ErrorKind::Contract, "chow_liu needs at least one sample");
  require(vocab >= 1, ErrorKind::Config, "vocabulary must be positive");
  const std::size_t n = data.variables;
  const auto margins = marginal_counts(data, vocab);
  PairCounter counter(vocab);

  struct Edge {
    long long key;  // MI quantized so that float noise cannot reorder near-ties
    double mi;
    std::size_t i, j;
  };
  std::vector<Edge> edges;
  edges.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double mi = counter.mutual_information(data, i, j, margins);
      edges.push_back({std::llround(mi * 1e12), mi, i, j});
    }
  }
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    return std::tie(b.key, a.i, a.j) < std::tie(a.key, b.i, b.j);
  });

  DisjointSets sets(n);
  std::vector<std::vector<std::pair<std::size_t, double>>> adj(n);
  for (const Edge& e : edges) {
    if (sets.unite(e.i, e.j)) {
      adj[e.i].emplace_back(e.j, e.mi);
      adj[e.j].emplace_back(e.i, e.mi);
    }
  }

  ChowLiuTree tree;
  tree.variables = n;
  tree.root = 0;
  tree.parent.assign(n, -1);
  tree.weight.assign(n, 0.0);
  std::vector<bool> seen(n, false);
  std::vector<std::size_t> queue{0};
  seen[0] = true;
  for (std::size_t q = 0; q < queue.size(); ++q) {
    const std::size_t v = queue[q];
    auto nbrs = adj[v];
    std::sort(nbrs.begin(), nbrs.end());
    for (const auto& [u, w] : nbrs) {
      if (!seen[u]) {
        seen[u] = true;
        tree.parent[u] = static_cast<std::ptrdiff_t>(v);
        tree.weight[u] = w;
        queue.push_back(u);
      }
    }
  }
  return tree;
}

}  // namespace moncirc
