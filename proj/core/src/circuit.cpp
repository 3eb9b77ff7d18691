#include "moncirc/circuit.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "moncirc/error.hpp"
#include "moncirc/random.hpp"

namespace moncirc {

Block Block::leaf(std::size_t variable, std::size_t size, std::size_t table) {
  Block b;
  b.kind = BlockKind::Leaf;
  b.size = size;
  b.variable = variable;
  b.param = table;
  return b;
}

Block Block::hadamard(std::vector<BlockId> children, std::size_t size) {
  Block b;
  b.kind = BlockKind::Product;
  b.product = ProductKind::Hadamard;
  b.children = std::move(children);
  b.size = size;
  return b;
}

Block Block::kronecker(std::vector<BlockId> children, std::size_t size) {
  Block b = hadamard(std::move(children), size);
  b.product = ProductKind::Kronecker;
  return b;
}

Block Block::sum(std::vector<BlockId> children, std::size_t size, std::size_t param) {
  Block b;
  b.kind = BlockKind::Sum;
  b.children = std::move(children);
  b.size = size;
  b.param = param;
  return b;
}

LeafTable LeafTable::uniform(std::size_t rows, std::size_t vocab) {
  return LeafTable{rows, vocab, std::vector<double>(rows * vocab, 1.0 / static_cast<double>(vocab))};
}

bool LeafTable::row_stochastic(double tol) const {
  for (std::size_t k = 0; k < rows; ++k) {
    double s = 0.0;
    for (double v : row(k)) {
      if (!(v >= 0.0)) return false;
      s += v;
    }
    if (std::abs(s - 1.0) > tol) return false;
  }
  return true;
}

std::size_t param_inputs(const SumParam& p) {
  return std::visit(
      [](const auto& v) -> std::size_t {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, DenseWeights>) return v.cols();
        else if constexpr (std::is_same_v<T, MonarchFactorization>) return v.input_size();
        else return v.size;
      },
      p);
}

std::size_t param_outputs(const SumParam& p) {
  return std::visit(
      [](const auto& v) -> std::size_t {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, DenseWeights>) return v.rows();
        else if constexpr (std::is_same_v<T, MonarchFactorization>) return v.output_size();
        else return v.size;
      },
      p);
}

std::size_t param_count(const SumParam& p) {
  return std::visit(
      [](const auto& v) -> std::size_t {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, DenseWeights>) return v.rows() * v.cols();
        else if constexpr (std::is_same_v<T, MonarchFactorization>) return v.parameter_count();
        else return 0;
      },
      p);
}

std::uint64_t param_flops(const SumParam& p) {
  if (std::holds_alternative<IdentityMap>(p)) return 0;
  return static_cast<std::uint64_t>(param_count(p));
}

bool param_row_stochastic(const SumParam& p, double tol) {
  return std::visit(
      [tol](const auto& v) -> bool {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, DenseWeights>) {
          return (v.w.array() >= 0.0).all() && v.row_stochastic(tol);
        } else if constexpr (std::is_same_v<T, MonarchFactorization>) {
          return v.non_negative() && v.row_stochastic(tol);
        } else {
          return true;
        }
      },
      p);
}

std::string param_kind(const SumParam& p) {
  switch (p.index()) {
    case 0: return "dense";
    case 1: return "monarch";
    default: return "identity";
  }
}

CircuitGraph::CircuitGraph(std::vector<Block> blocks, BlockId root, std::vector<LeafTable> leaves,
                           std::vector<SumParam> sums, bool normalized)
    : leaves_(std::move(leaves)), sums_(std::move(sums)), normalized_(normalized) {
  auto topo = std::make_shared<Topology>();
  require(!blocks.empty(), ErrorKind::Contract, "circuit has no blocks");
  require(root < blocks.size(), ErrorKind::Contract, "root block id out of range");
  topo->scopes.resize(blocks.size());
  for (BlockId id = 0; id < blocks.size(); ++id) {
    const Block& b = blocks[id];
    const std::string where = "block " + std::to_string(id) + ": ";
    require(b.size > 0, ErrorKind::Contract, where + "empty block");
    VariableScope& sc = topo->scopes[id];
    if (b.kind == BlockKind::Leaf) {
      require(b.children.empty(), ErrorKind::Contract, where + "leaf with children");
      require(b.param < leaves_.size(), ErrorKind::Contract, where + "leaf table index out of range");
      sc = {static_cast<std::uint32_t>(b.variable)};
      topo->num_variables = std::max(topo->num_variables, b.variable + 1);
      continue;
    }
    require(!b.children.empty(), ErrorKind::Contract, where + "inner block without children");
    if (b.kind == BlockKind::Sum) {
      require(b.param < sums_.size(), ErrorKind::Contract, where + "sum parameter index out of range");
    }
    for (BlockId c : b.children) {
      require(c < id, ErrorKind::Contract,
              where + "child " + std::to_string(c) + " does not precede its parent");
      sc.insert(sc.end(), topo->scopes[c].begin(), topo->scopes[c].end());
    }
    std::sort(sc.begin(), sc.end());
    sc.erase(std::unique(sc.begin(), sc.end()), sc.end());
  }
  topo->blocks = std::move(blocks);
  topo->root = root;
  topo_ = std::move(topo);
}

std::size_t CircuitGraph::vocab(std::size_t variable) const {
  for (const Block& b : blocks()) {
    if (b.kind == BlockKind::Leaf && b.variable == variable) return leaves_[b.param].vocab;
  }
  raise(ErrorKind::Domain, "no leaf over variable " + std::to_string(variable));
}

bool ValidationReport::has(ViolationKind kind) const {
  return std::any_of(violations.begin(), violations.end(),
                     [kind](const Violation& v) { return v.kind == kind; });
}

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::Smoothness: return "smoothness";
    case ViolationKind::Decomposability: return "decomposability";
    case ViolationKind::Dimension: return "dimension";
    case ViolationKind::Normalization: return "normalization";
    case ViolationKind::Structure: return "structure";
  }
  return "unknown";
}

std::string ValidationReport::to_string() const {
  std::ostringstream os;
  for (const auto& v : violations) {
    os << moncirc::to_string(v.kind) << " @ block " << v.block << ": " << v.message << "\n";
  }
  return os.str();
}

ValidationReport validate(const CircuitGraph& graph, double tol) {
  ValidationReport report;
  auto add = [&](ViolationKind k, BlockId b, std::string msg) {
    report.violations.push_back({k, b, std::move(msg)});
  };
  const auto& blocks = graph.blocks();
  if (graph.block(graph.root()).size != 1) {
    add(ViolationKind::Structure, graph.root(), "root block must hold exactly one node");
  }
  for (BlockId id = 0; id < blocks.size(); ++id) {
    const Block& b = blocks[id];
    switch (b.kind) {
      case BlockKind::Leaf: {
        const LeafTable& t = graph.leaf_tables()[b.param];
        if (t.rows != b.size) {
          add(ViolationKind::Dimension, id,
              "leaf block size " + std::to_string(b.size) + " but table has " +
                  std::to_string(t.rows) + " rows");
        }
        if (t.probs.size() != t.rows * t.vocab || t.vocab == 0) {
          add(ViolationKind::Dimension, id, "malformed leaf table");
        }
        break;
      }
      case BlockKind::Product: {
        std::size_t expect = b.product == ProductKind::Hadamard ? b.size : 1;
        for (std::size_t a = 0; a < b.children.size(); ++a) {
          const Block& c = blocks[b.children[a]];
          if (b.product == ProductKind::Hadamard && c.size != b.size) {
            add(ViolationKind::Dimension, id,
                "hadamard child " + std::to_string(b.children[a]) + " has size " +
                    std::to_string(c.size) + ", block has " + std::to_string(b.size));
          }
          if (b.product == ProductKind::Kronecker) expect *= c.size;
          for (std::size_t k = a + 1; k < b.children.size(); ++k) {
            const auto& s1 = graph.scope(b.children[a]);
            const auto& s2 = graph.scope(b.children[k]);
            std::vector<std::uint32_t> common;
            std::set_intersection(s1.begin(), s1.end(), s2.begin(), s2.end(),
                                  std::back_inserter(common));
            if (!common.empty()) {
              add(ViolationKind::Decomposability, id,
                  "product block " + std::to_string(id) + " children " +
                      std::to_string(b.children[a]) + " and " + std::to_string(b.children[k]) +
                      " share variable " + std::to_string(common.front()));
            }
          }
        }
        if (b.product == ProductKind::Kronecker && expect != b.size) {
          add(ViolationKind::Dimension, id,
              "kronecker block size " + std::to_string(b.size) + " != product of child sizes " +
                  std::to_string(expect));
        }
        break;
      }
      case BlockKind::Sum: {
        std::size_t inputs = 0;
        for (BlockId c : b.children) {
          inputs += blocks[c].size;
          if (graph.scope(c) != graph.scope(b.children.front())) {
            add(ViolationKind::Smoothness, id,
                "sum block " + std::to_string(id) + " children " +
                    std::to_string(b.children.front()) + " and " + std::to_string(c) +
                    " have different scopes");
          }
        }
        const SumParam& p = graph.sum_params()[b.param];
        if (param_inputs(p) != inputs || param_outputs(p) != b.size) {
          add(ViolationKind::Dimension, id,
              "sum parameter is " + std::to_string(param_outputs(p)) + "x" +
                  std::to_string(param_inputs(p)) + ", block needs " + std::to_string(b.size) +
                  "x" + std::to_string(inputs));
        }
        break;
      }
    }
  }
  if (graph.normalized()) {
    for (BlockId id = 0; id < blocks.size(); ++id) {
      const Block& b = blocks[id];
      if (b.kind == BlockKind::Leaf && !graph.leaf_tables()[b.param].row_stochastic(tol)) {
        add(ViolationKind::Normalization, id, "leaf rows are not normalized");
      }
      if (b.kind == BlockKind::Sum && !param_row_stochastic(graph.sum_params()[b.param], tol)) {
        add(ViolationKind::Normalization, id, "sum weights are not row-stochastic");
      }
    }
  }
  return report;
}

CircuitGraph reorder_blocks(const CircuitGraph& graph, std::span<const BlockId> new_order) {
  const std::size_t n = graph.num_blocks();
  require(new_order.size() == n, ErrorKind::Contract, "reorder_blocks: order has wrong length");
  std::vector<BlockId> position(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    require(new_order[k] < n && position[new_order[k]] == n, ErrorKind::Contract,
            "reorder_blocks: order is not a permutation");
    position[new_order[k]] = k;
  }
  std::vector<Block> blocks;
  blocks.reserve(n);
  for (BlockId old : new_order) {
    Block b = graph.block(old);
    for (BlockId& c : b.children) c = position[c];
    blocks.push_back(std::move(b));
  }
  CircuitGraph out(std::move(blocks), position[graph.root()], graph.leaf_tables(),
                   graph.sum_params(), graph.normalized());
  out.metadata = graph.metadata;
  return out;
}

namespace {

void random_rows(std::span<double> values, std::size_t width, Rng& rng) {
  for (std::size_t start = 0; start < values.size(); start += width) {
    double s = 0.0;
    for (std::size_t i = 0; i < width; ++i) {
      values[start + i] = 0.01 + rng.uniform();
      s += values[start + i];
    }
    for (std::size_t i = 0; i < width; ++i) values[start + i] /= s;
  }
}

}  // namespace

void randomize_parameters(CircuitGraph& graph, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& t : graph.leaf_tables()) random_rows(t.probs, t.vocab, rng);
  for (auto& p : graph.sum_params()) {
    if (auto* d = std::get_if<DenseWeights>(&p)) {
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> tmp(d->w.rows(),
                                                                                 d->w.cols());
      random_rows(std::span<double>(tmp.data(), static_cast<std::size_t>(tmp.size())),
                  d->cols(), rng);
      d->w = tmp;
    } else if (auto* m = std::get_if<MonarchFactorization>(&p)) {
      for (std::size_t t = 0; t < m->depth(); ++t) random_rows(m->layer(t), m->layer_in(t), rng);
      m->untie();
    }
  }
  graph.set_normalized(true);
}

std::uint64_t hidden_flops(const CircuitGraph& graph) {
  std::uint64_t best = 0;
  for (const auto& p : graph.sum_params()) best = std::max(best, param_flops(p));
  return best;
}

std::uint64_t leaf_flops(const CircuitGraph& graph) {
  std::uint64_t best = 0;
  for (const auto& t : graph.leaf_tables()) best = std::max<std::uint64_t>(best, t.rows);
  return best;
}

std::size_t parameter_count(const CircuitGraph& graph) {
  std::size_t n = 0;
  for (const auto& t : graph.leaf_tables()) n += t.probs.size();
  for (const auto& p : graph.sum_params()) n += param_count(p);
  return n;
}

}  // namespace moncirc
