#include "moncirc/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "moncirc/error.hpp"
#include "moncirc/parallel.hpp"
#include "moncirc/random.hpp"

namespace moncirc {

namespace {

using Mat = Eigen::MatrixXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Strided = Eigen::Map<Mat, 0, Eigen::OuterStride<>>;
using ConstStrided = Eigen::Map<const Mat, 0, Eigen::OuterStride<>>;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// Per-worker scratch budget used to size row chunks.
constexpr std::size_t kChunkBudgetBytes = std::size_t{192} << 20;
constexpr std::size_t kMaxChunk = 64;

struct Prepared {
  const CircuitGraph& graph;
  const DatasetShard& data;
  std::vector<std::vector<double>> log_leaves;  // rows x vocab, row-major
  std::size_t chunk = 1;
};

Prepared prepare(const CircuitGraph& graph, const DatasetShard& data) {
  require(graph.num_blocks() > 0, ErrorKind::Contract, "empty circuit");
  require(data.variables == graph.num_variables(), ErrorKind::Dimension,
          "data has " + std::to_string(data.variables) + " variables, circuit has " +
              std::to_string(graph.num_variables()));
  require(data.values.size() == data.items * data.variables, ErrorKind::Data,
          "data matrix is not rectangular");
  const auto report = validate(graph);
  for (const auto& v : report.violations) {
    if (v.kind == ViolationKind::Dimension || v.kind == ViolationKind::Structure) {
      raise(ErrorKind::Dimension, v.message);
    }
  }
  Prepared p{graph, data, {}, 1};
  p.log_leaves.reserve(graph.leaf_tables().size());
  for (const auto& t : graph.leaf_tables()) {
    std::vector<double> lg(t.probs.size());
    std::transform(t.probs.begin(), t.probs.end(), lg.begin(), [](double v) { return std::log(v); });
    p.log_leaves.push_back(std::move(lg));
  }
  std::size_t per_item = 0;
  for (const auto& b : graph.blocks()) {
    per_item += 2 * b.size;
    if (b.kind == BlockKind::Sum) {
      if (const auto* f = std::get_if<MonarchFactorization>(&graph.sum_params()[b.param])) {
        for (std::size_t t = 0; t < f->depth(); ++t) per_item += 2 * f->layer_out(t) * f->layer_batch(t);
      }
    }
  }
  const std::size_t budget = kChunkBudgetBytes / sizeof(double);
  p.chunk = std::clamp<std::size_t>(budget / std::max<std::size_t>(per_item, 1), 1, kMaxChunk);
  return p;
}

// One forward (and optionally backward) pass over a chunk of rows.
class Pass {
 public:
  Pass(const Prepared& prep, std::span<const std::size_t> rows)
      : prep_(prep), g_(prep.graph), rows_(rows), B_(static_cast<Eigen::Index>(rows.size())) {
    const std::size_t n = g_.num_blocks();
    val_.resize(n);
    shift_.resize(n);
    inner_.resize(n);
  }

  void forward() {
    for (BlockId id = 0; id < g_.num_blocks(); ++id) {
      const Block& b = g_.block(id);
      switch (b.kind) {
        case BlockKind::Leaf: forward_leaf(id, b); break;
        case BlockKind::Product: forward_product(id, b); break;
        case BlockKind::Sum: forward_sum(id, b); break;
      }
    }
  }

  const Mat& root() const { return val_[g_.root()]; }

  void backward(FlowTable& table) {
    const std::size_t n = g_.num_blocks();
    flow_.assign(n, Mat());
    Mat& top = flow_at(g_.root());
    const Mat& rv = val_[g_.root()];
    for (Eigen::Index b = 0; b < B_; ++b) {
      const double lp = rv(b, 0);
      if (std::isfinite(lp)) {
        top(b, 0) = 1.0;
        table.log_likelihood += lp;
      } else {
        ++table.zero_flow_items;
      }
    }
    table.items += rows_.size();
    for (std::size_t k = n; k-- > 0;) {
      const BlockId id = k;
      if (flow_[id].size() != 0) {
        const Block& b = g_.block(id);
        switch (b.kind) {
          case BlockKind::Leaf: backward_leaf(id, b, table); break;
          case BlockKind::Product: backward_product(id, b); break;
          case BlockKind::Sum: backward_sum(id, b, table); break;
        }
      }
      flow_[id] = Mat();
      val_[id] = Mat();
      inner_[id].clear();
    }
  }

 private:
  std::int32_t x(Eigen::Index b, std::size_t var) const {
    return prep_.data.at(rows_[static_cast<std::size_t>(b)], var);
  }

  Mat& flow_at(BlockId id) {
    if (flow_[id].size() == 0) flow_[id] = Mat::Zero(B_, static_cast<Eigen::Index>(g_.block(id).size));
    return flow_[id];
  }

  void forward_leaf(BlockId id, const Block& b) {
    const auto& table = g_.leaf_tables()[b.param];
    const auto& lg = prep_.log_leaves[b.param];
    const std::size_t V = table.vocab;
    Mat& out = val_[id];
    out.resize(B_, static_cast<Eigen::Index>(b.size));
    std::vector<std::int32_t> sym(rows_.size());
    for (Eigen::Index r = 0; r < B_; ++r) {
      const std::int32_t s = x(r, b.variable);
      if (s != kMissing && (s < 0 || static_cast<std::size_t>(s) >= V)) {
        raise(ErrorKind::Domain, "value " + std::to_string(s) + " of variable " +
                                     std::to_string(b.variable) + " outside vocabulary " + std::to_string(V));
      }
      sym[static_cast<std::size_t>(r)] = s;
    }
    for (std::size_t k = 0; k < b.size; ++k) {
      const double* row = lg.data() + k * V;
      for (Eigen::Index r = 0; r < B_; ++r) {
        const std::int32_t s = sym[static_cast<std::size_t>(r)];
        out(r, static_cast<Eigen::Index>(k)) = s == kMissing ? 0.0 : row[s];
      }
    }
  }

  void forward_product(BlockId id, const Block& b) {
    Mat& out = val_[id];
    if (b.product == ProductKind::Hadamard) {
      out = val_[b.children[0]];
      for (std::size_t c = 1; c < b.children.size(); ++c) out += val_[b.children[c]];
      return;
    }
    out.setZero(B_, static_cast<Eigen::Index>(b.size));
    for (std::size_t idx = 0; idx < b.size; ++idx) {
      std::size_t rem = idx;
      for (std::size_t c = b.children.size(); c-- > 0;) {
        const std::size_t sz = g_.block(b.children[c]).size;
        out.col(static_cast<Eigen::Index>(idx)) += val_[b.children[c]].col(static_cast<Eigen::Index>(rem % sz));
        rem /= sz;
      }
    }
  }

  // exp(children - shift), concatenated along columns.
  Mat scaled_inputs(const Block& b, const Eigen::VectorXd& m) const {
    Eigen::Index width = 0;
    for (BlockId c : b.children) width += static_cast<Eigen::Index>(g_.block(c).size);
    Mat xs(B_, width);
    Eigen::Index off = 0;
    for (BlockId c : b.children) {
      const Mat& v = val_[c];
      xs.middleCols(off, v.cols()) = (v.array().colwise() - m.array()).exp();
      off += v.cols();
    }
    return xs;
  }

  void forward_sum(BlockId id, const Block& b) {
    Eigen::VectorXd m = Eigen::VectorXd::Constant(B_, kNegInf);
    for (BlockId c : b.children) m = m.cwiseMax(val_[c].rowwise().maxCoeff());
    for (Eigen::Index r = 0; r < B_; ++r) {
      if (!std::isfinite(m(r))) m(r) = 0.0;
    }
    const Mat xs = scaled_inputs(b, m);
    Mat ys;
    const SumParam& param = g_.sum_params()[b.param];
    if (const auto* d = std::get_if<DenseWeights>(&param)) {
      ys.noalias() = xs * d->w.transpose();
    } else if (const auto* f = std::get_if<MonarchFactorization>(&param)) {
      Mat cur = xs;
      for (std::size_t t = 0; t < f->depth(); ++t) {
        const auto mo = static_cast<Eigen::Index>(f->layer_out(t));
        const auto ni = static_cast<Eigen::Index>(f->layer_in(t));
        const auto R = static_cast<Eigen::Index>(f->layer_batch(t));
        Mat next(B_, R * mo);
        for (Eigen::Index r = 0; r < R; ++r) {
          ConstStrided xr(cur.data() + r * B_, B_, ni, Eigen::OuterStride<>(R * B_));
          Eigen::Map<const RowMat> a(f->slice(t, static_cast<std::size_t>(r)).data(), mo, ni);
          next.middleCols(r * mo, mo).noalias() = xr * a.transpose();
        }
        if (t + 1 < f->depth()) inner_[id].push_back(next);
        cur = std::move(next);
      }
      ys = std::move(cur);
    } else {
      ys = xs;
    }
    val_[id] = (ys.array().log().colwise() + m.array()).matrix();
    shift_[id] = std::move(m);
  }

  void backward_leaf(BlockId id, const Block& b, FlowTable& table) {
    auto& acc = table.leaves[b.param];
    const std::size_t V = g_.leaf_tables()[b.param].vocab;
    const Mat& F = flow_[id];
    for (std::size_t k = 0; k < b.size; ++k) {
      for (Eigen::Index r = 0; r < B_; ++r) {
        const std::int32_t s = x(r, b.variable);
        if (s != kMissing) acc[k * V + static_cast<std::size_t>(s)] += F(r, static_cast<Eigen::Index>(k));
      }
    }
  }

  void backward_product(BlockId id, const Block& b) {
    const Mat& F = flow_[id];
    if (b.product == ProductKind::Hadamard) {
      for (BlockId c : b.children) flow_at(c) += F;
      return;
    }
    for (BlockId c : b.children) flow_at(c);
    for (std::size_t idx = 0; idx < b.size; ++idx) {
      std::size_t rem = idx;
      for (std::size_t c = b.children.size(); c-- > 0;) {
        const std::size_t sz = g_.block(b.children[c]).size;
        flow_[b.children[c]].col(static_cast<Eigen::Index>(rem % sz)) += F.col(static_cast<Eigen::Index>(idx));
        rem /= sz;
      }
    }
  }

  void backward_sum(BlockId id, const Block& b, FlowTable& table) {
    const Mat& F = flow_[id];
    const Eigen::VectorXd& m = shift_[id];
    const Mat xs = scaled_inputs(b, m);
    const Mat ys = (val_[id].array().colwise() - m.array()).exp().matrix();
    const Mat G = (ys.array() > 0.0).select(F.array() / ys.array(), 0.0).matrix();
    ParamFlow& pf = table.sums[b.param];
    const SumParam& param = g_.sum_params()[b.param];
    Mat fin;
    if (const auto* d = std::get_if<DenseWeights>(&param)) {
      Eigen::Map<Mat> acc(pf.edges[0].data(), d->w.rows(), d->w.cols());
      acc.array() += d->w.array() * (G.transpose() * xs).array();
      Mat gin = G * d->w;
      fin = (xs.array() * gin.array()).matrix();
      Eigen::Map<Eigen::RowVectorXd>(pf.inputs[0].data(), fin.cols()) += fin.colwise().sum();
    } else if (const auto* f = std::get_if<MonarchFactorization>(&param)) {
      Mat g = G;
      for (std::size_t t = f->depth(); t-- > 0;) {
        const Mat& zin = t == 0 ? xs : inner_[id][t - 1];
        const auto mo = static_cast<Eigen::Index>(f->layer_out(t));
        const auto ni = static_cast<Eigen::Index>(f->layer_in(t));
        const auto R = static_cast<Eigen::Index>(f->layer_batch(t));
        Mat gin(B_, ni * R);
        double* acc_base = pf.edges[t].data();
        for (Eigen::Index r = 0; r < R; ++r) {
          const auto gr = g.middleCols(r * mo, mo);
          ConstStrided zr(zin.data() + r * B_, B_, ni, Eigen::OuterStride<>(R * B_));
          Strided gir(gin.data() + r * B_, B_, ni, Eigen::OuterStride<>(R * B_));
          Eigen::Map<const RowMat> a(f->slice(t, static_cast<std::size_t>(r)).data(), mo, ni);
          Eigen::Map<RowMat> acc(acc_base + r * mo * ni, mo, ni);
          gir.noalias() = gr * a;
          acc.array() += a.array() * (gr.transpose() * zr).array();
        }
        Eigen::Map<Eigen::RowVectorXd>(pf.inputs[t].data(), gin.cols()) +=
            (zin.array() * gin.array()).colwise().sum().matrix();
        g = std::move(gin);
      }
      fin = (xs.array() * g.array()).matrix();
    } else {
      fin = F;
    }
    Eigen::Index off = 0;
    for (BlockId c : b.children) {
      const auto sz = static_cast<Eigen::Index>(g_.block(c).size);
      flow_at(c) += fin.middleCols(off, sz);
      off += sz;
    }
  }

  const Prepared& prep_;
  const CircuitGraph& g_;
  std::span<const std::size_t> rows_;
  Eigen::Index B_;
  std::vector<Mat> val_;
  std::vector<Eigen::VectorXd> shift_;
  std::vector<std::vector<Mat>> inner_;
  std::vector<Mat> flow_;
};

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

std::size_t draw(std::span<const double> weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  require(total > 0.0, ErrorKind::Numeric, "sampling from an all-zero row");
  const double u = rng.uniform() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  // Rounding can leave u at the very top; fall back to the last positive entry.
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return i;
  }
  return 0;
}

// Input index of a sum parameter reached from output node `node`.
std::size_t sample_input(const SumParam& param, std::size_t node, Rng& rng) {
  if (const auto* d = std::get_if<DenseWeights>(&param)) {
    std::vector<double> row(d->cols());
    for (std::size_t i = 0; i < row.size(); ++i) row[i] = d->w(static_cast<Eigen::Index>(node), static_cast<Eigen::Index>(i));
    return draw(row, rng);
  }
  if (const auto* f = std::get_if<MonarchFactorization>(&param)) {
    std::size_t pos = node;
    for (std::size_t t = f->depth(); t-- > 0;) {
      const std::size_t mo = f->layer_out(t), ni = f->layer_in(t), R = f->layer_batch(t);
      const std::size_t r = pos / mo, j = pos % mo;
      const auto slice = f->slice(t, r);
      const std::size_t i = draw(slice.subspan(j * ni, ni), rng);
      pos = i * R + r;
    }
    return pos;
  }
  return node;
}

void sample_into(const CircuitGraph& g, std::span<std::int32_t> out, Rng& rng) {
  std::fill(out.begin(), out.end(), kMissing);
  std::vector<std::pair<BlockId, std::size_t>> stack{{g.root(), 0}};
  while (!stack.empty()) {
    const auto [id, node] = stack.back();
    stack.pop_back();
    const Block& b = g.block(id);
    switch (b.kind) {
      case BlockKind::Leaf: {
        const auto& t = g.leaf_tables()[b.param];
        out[b.variable] = static_cast<std::int32_t>(draw(t.row(node), rng));
        break;
      }
      case BlockKind::Product: {
        if (b.product == ProductKind::Hadamard) {
          for (std::size_t c = b.children.size(); c-- > 0;) stack.emplace_back(b.children[c], node);
        } else {
          std::size_t rem = node;
          std::vector<std::pair<BlockId, std::size_t>> parts;
          for (std::size_t c = b.children.size(); c-- > 0;) {
            const std::size_t sz = g.block(b.children[c]).size;
            parts.emplace_back(b.children[c], rem % sz);
            rem /= sz;
          }
          stack.insert(stack.end(), parts.begin(), parts.end());
        }
        break;
      }
      case BlockKind::Sum: {
        std::size_t i = sample_input(g.sum_params()[b.param], node, rng);
        for (BlockId c : b.children) {
          const std::size_t sz = g.block(c).size;
          if (i < sz) {
            stack.emplace_back(c, i);
            break;
          }
          i -= sz;
        }
        break;
      }
    }
  }
}

}  // namespace

FlowTable FlowTable::zeros_like(const CircuitGraph& graph) {
  FlowTable t;
  t.sums.reserve(graph.sum_params().size());
  for (const auto& p : graph.sum_params()) {
    ParamFlow pf;
    if (const auto* d = std::get_if<DenseWeights>(&p)) {
      pf.edges.emplace_back(d->rows() * d->cols(), 0.0);
      pf.inputs.emplace_back(d->cols(), 0.0);
    } else if (const auto* f = std::get_if<MonarchFactorization>(&p)) {
      for (std::size_t l = 0; l < f->depth(); ++l) {
        pf.edges.emplace_back(f->layer_size(l), 0.0);
        pf.inputs.emplace_back(f->layer_in(l) * f->layer_batch(l), 0.0);
      }
    }
    t.sums.push_back(std::move(pf));
  }
  for (const auto& l : graph.leaf_tables()) t.leaves.emplace_back(l.probs.size(), 0.0);
  return t;
}

namespace {
void add_into(std::vector<double>& dst, const std::vector<double>& src) {
  require(dst.size() == src.size(), ErrorKind::Dimension, "flow tables have different shapes");
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
}
}  // namespace

void FlowTable::merge(const FlowTable& other) {
  require(sums.size() == other.sums.size() && leaves.size() == other.leaves.size(),
          ErrorKind::Dimension, "flow tables have different shapes");
  for (std::size_t p = 0; p < sums.size(); ++p) {
    require(sums[p].edges.size() == other.sums[p].edges.size(), ErrorKind::Dimension,
            "flow tables have different shapes");
    for (std::size_t l = 0; l < sums[p].edges.size(); ++l) {
      add_into(sums[p].edges[l], other.sums[p].edges[l]);
      add_into(sums[p].inputs[l], other.sums[p].inputs[l]);
    }
  }
  for (std::size_t l = 0; l < leaves.size(); ++l) add_into(leaves[l], other.leaves[l]);
  items += other.items;
  zero_flow_items += other.zero_flow_items;
  log_likelihood += other.log_likelihood;
}

bool FlowTable::non_negative() const {
  auto ok = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x >= 0.0; });
  };
  for (const auto& p : sums) {
    for (const auto& e : p.edges) if (!ok(e)) return false;
    for (const auto& e : p.inputs) if (!ok(e)) return false;
  }
  return std::all_of(leaves.begin(), leaves.end(), ok);
}

std::vector<double> evaluate_log_batch(const CircuitGraph& graph, const DatasetShard& data) {
  const Prepared prep = prepare(graph, data);
  require(graph.block(graph.root()).size == 1, ErrorKind::Dimension, "root block must have size 1");
  std::vector<double> out(data.items);
  const auto rows = all_rows(data.items);
  const std::size_t chunks = (data.items + prep.chunk - 1) / prep.chunk;
  parallel_for(chunks, worker_count(), [&](std::size_t k) {
    const std::size_t begin = k * prep.chunk, end = std::min(data.items, begin + prep.chunk);
    Pass pass(prep, std::span<const std::size_t>(rows).subspan(begin, end - begin));
    pass.forward();
    for (std::size_t r = begin; r < end; ++r) out[r] = pass.root()(static_cast<Eigen::Index>(r - begin), 0);
  });
  return out;
}

double total_log_likelihood(const CircuitGraph& graph, const DatasetShard& data) {
  const auto lls = evaluate_log_batch(graph, data);
  double total = 0.0;
  for (double v : lls) total += v;
  return total;
}

double evaluate_log(const CircuitGraph& graph, std::span<const std::int32_t> assignment) {
  require(assignment.size() == graph.num_variables(), ErrorKind::Dimension,
          "assignment has " + std::to_string(assignment.size()) + " entries, circuit has " +
              std::to_string(graph.num_variables()) + " variables");
  for (std::size_t v = 0; v < assignment.size(); ++v) {
    require(assignment[v] >= 0, ErrorKind::Domain,
            "variable " + std::to_string(v) + " has value " + std::to_string(assignment[v]));
  }
  DatasetShard one{1, assignment.size(), 0, {assignment.begin(), assignment.end()}, {}};
  return evaluate_log_batch(graph, one)[0];
}

double marginalize_log(const CircuitGraph& graph, const std::map<std::size_t, std::int32_t>& evidence) {
  std::vector<std::int32_t> row(graph.num_variables(), kMissing);
  for (const auto& [v, s] : evidence) {
    require(v < row.size(), ErrorKind::Domain, "variable " + std::to_string(v) + " is not in the circuit");
    require(s >= 0, ErrorKind::Domain,
            "variable " + std::to_string(v) + " has value " + std::to_string(s));
    row[v] = s;
  }
  DatasetShard one{1, row.size(), 0, std::move(row), {}};
  return evaluate_log_batch(graph, one)[0];
}

std::vector<std::int32_t> sample(const CircuitGraph& graph, std::uint64_t seed) {
  return sample_batch(graph, 1, seed).values;
}

DatasetShard sample_batch(const CircuitGraph& graph, std::size_t count, std::uint64_t seed) {
  require(graph.normalized(), ErrorKind::Contract, "sampling requires a normalized circuit");
  require(graph.block(graph.root()).size == 1, ErrorKind::Dimension, "root block must have size 1");
  DatasetShard out;
  out.items = count;
  out.variables = graph.num_variables();
  for (const auto& t : graph.leaf_tables()) out.vocab = std::max(out.vocab, t.vocab);
  out.provenance = "samples seed=" + std::to_string(seed);
  out.values.resize(count * out.variables);
  Rng rng(seed);
  for (std::size_t k = 0; k < count; ++k) {
    sample_into(graph, std::span<std::int32_t>(out.values).subspan(k * out.variables, out.variables), rng);
  }
  return out;
}

FlowTable flows(const CircuitGraph& graph, const DatasetShard& data, std::span<const std::size_t> rows) {
  const Prepared prep = prepare(graph, data);
  require(graph.block(graph.root()).size == 1, ErrorKind::Dimension, "root block must have size 1");
  std::vector<std::size_t> owned;
  if (rows.empty()) {
    owned = all_rows(data.items);
    rows = owned;
  }
  require(!rows.empty(), ErrorKind::Contract, "flows: empty batch");
  const bool in_range = std::all_of(rows.begin(), rows.end(), [&](std::size_t r) { return r < data.items; });
  require(in_range, ErrorKind::Contract, "flows: row index out of range");

  FlowTable total = FlowTable::zeros_like(graph);
  const std::size_t chunks = (rows.size() + prep.chunk - 1) / prep.chunk;
  const std::size_t workers = std::max<std::size_t>(1, std::min(worker_count(), chunks));
  std::vector<FlowTable> partial(workers);
  for (std::size_t first = 0; first < chunks; first += workers) {
    const std::size_t round = std::min(workers, chunks - first);
    parallel_for(round, workers, [&](std::size_t w) {
      const std::size_t k = first + w;
      const std::size_t begin = k * prep.chunk, end = std::min(rows.size(), begin + prep.chunk);
      partial[w] = FlowTable::zeros_like(graph);
      Pass pass(prep, rows.subspan(begin, end - begin));
      pass.forward();
      pass.backward(partial[w]);
    });
    for (std::size_t w = 0; w < round; ++w) total.merge(partial[w]);
  }
  return total;
}

}  // namespace moncirc
