#include "moncirc/product.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "moncirc/error.hpp"
#include "moncirc/inference.hpp"

namespace moncirc {

namespace {

std::string scope_string(const VariableScope& s) {
  std::ostringstream os;
  os << "{";
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (k) os << ",";
    if (s.size() > 8 && k == 4) {
      os << "...," << s.back();
      break;
    }
    os << s[k];
  }
  os << "}";
  return os.str();
}

std::string children_scopes(const CircuitGraph& g, const Block& b) {
  std::string out;
  for (std::size_t k = 0; k < b.children.size(); ++k) {
    if (k) out += " | ";
    out += scope_string(g.scope(b.children[k]));
  }
  return out;
}

std::optional<std::string> compare_blocks(const CircuitGraph& a, const CircuitGraph& b, BlockId id) {
  const Block& x = a.block(id);
  const Block& y = b.block(id);
  if (x.kind != y.kind) return "block kinds differ";
  if (a.scope(id) != b.scope(id)) {
    return "scope " + scope_string(a.scope(id)) + " vs " + scope_string(b.scope(id));
  }
  if (x.children.size() != y.children.size() || x.children != y.children) {
    return "scope split " + children_scopes(a, x) + " vs " + children_scopes(b, y);
  }
  if (x.kind == BlockKind::Product && x.product != y.product) return "product kinds differ";
  if (x.kind == BlockKind::Leaf && x.variable != y.variable) return "leaf variables differ";
  if (x.kind != BlockKind::Product && x.param != y.param) return "parameter sharing differs";
  return std::nullopt;
}

}  // namespace

std::string CompatibilityCertificate::to_string() const {
  if (compatible()) {
    return "compatible: " + std::to_string(circuits) + " circuits, " + std::to_string(blocks) +
           " aligned blocks over " + std::to_string(variables) + " variables";
  }
  return "incompatible at block " + std::to_string(mismatch->block) + " of circuit " +
         std::to_string(mismatch->circuit) + ": " + mismatch->message;
}

CompatibilityCertificate check_compatible(std::span<const CircuitGraph> circuits) {
  require(circuits.size() >= 2, ErrorKind::Contract, "check_compatible needs at least two circuits");
  CompatibilityCertificate cert;
  cert.circuits = circuits.size();
  const CircuitGraph& base = circuits[0];
  cert.variables = base.num_variables();
  const VariableScope& root_scope = base.scope(base.root());
  for (std::size_t c = 1; c < circuits.size(); ++c) {
    const CircuitGraph& other = circuits[c];
    require(other.scope(other.root()) == root_scope, ErrorKind::Domain,
            "circuit " + std::to_string(c) + " ranges over " + scope_string(other.scope(other.root())) +
                ", circuit 0 over " + scope_string(root_scope));
  }
  cert.blocks = base.num_blocks();
  for (std::size_t c = 1; c < circuits.size() && !cert.mismatch; ++c) {
    const CircuitGraph& other = circuits[c];
    const std::size_t n = std::min(base.num_blocks(), other.num_blocks());
    for (BlockId id = 0; id < n; ++id) {
      if (auto msg = compare_blocks(base, other, id)) {
        cert.mismatch = Incompatibility{id, c, *msg};
        break;
      }
    }
    if (!cert.mismatch && (base.num_blocks() != other.num_blocks() || base.root() != other.root())) {
      cert.mismatch = Incompatibility{n, c,
                                      "block counts differ (" + std::to_string(base.num_blocks()) +
                                          " vs " + std::to_string(other.num_blocks()) + ")"};
    }
  }
  if (cert.mismatch) cert.blocks = cert.mismatch->block;
  return cert;
}

CircuitGraph multiply(std::span<const CircuitGraph> circuits, const CompatibilityCertificate& certificate) {
  require(certificate.compatible(), ErrorKind::Contract,
          "multiply: certificate reports " + certificate.to_string());
  require(certificate.circuits == circuits.size() && !circuits.empty() &&
              certificate.blocks == circuits[0].num_blocks() &&
              certificate.variables == circuits[0].num_variables(),
          ErrorKind::Contract, "multiply: certificate does not describe these circuits");
  const CircuitGraph& base = circuits[0];
  const std::size_t d = circuits.size();

  std::vector<Block> blocks = base.blocks();
  for (BlockId id = 0; id < blocks.size(); ++id) {
    Block& b = blocks[id];
    require(!(b.kind == BlockKind::Product && b.product == ProductKind::Kronecker), ErrorKind::Unsupported,
            "multiply: Kronecker product block " + std::to_string(id) + " is not supported");
    require(!(b.kind == BlockKind::Sum && b.children.size() != 1), ErrorKind::Unsupported,
            "multiply: sum block " + std::to_string(id) + " has several children");
    std::size_t size = 1;
    for (const auto& c : circuits) size *= c.block(id).size;
    b.size = size;
  }

  std::vector<LeafTable> leaves;
  for (std::size_t l = 0; l < base.leaf_tables().size(); ++l) {
    std::vector<const LeafTable*> parts;
    for (const auto& c : circuits) {
      require(l < c.leaf_tables().size(), ErrorKind::Contract, "multiply: leaf table counts differ");
      parts.push_back(&c.leaf_tables()[l]);
      require(parts.back()->vocab == parts[0]->vocab, ErrorKind::Domain,
              "multiply: leaf table " + std::to_string(l) + " vocabularies differ");
    }
    LeafTable t;
    t.vocab = parts[0]->vocab;
    t.rows = 1;
    for (const auto* p : parts) t.rows *= p->rows;
    t.probs.assign(t.rows * t.vocab, 1.0);
    for (std::size_t k = 0; k < t.rows; ++k) {
      std::size_t rem = k;
      for (std::size_t c = d; c-- > 0;) {
        const std::size_t kc = rem % parts[c]->rows;
        rem /= parts[c]->rows;
        for (std::size_t s = 0; s < t.vocab; ++s) t.at(k, s) *= parts[c]->at(kc, s);
      }
    }
    leaves.push_back(std::move(t));
  }

  std::vector<SumParam> sums;
  for (std::size_t p = 0; p < base.sum_params().size(); ++p) {
    std::vector<Eigen::MatrixXd> kernels;
    std::size_t identity = 1;
    bool all_identity = true;
    for (const auto& c : circuits) {
      require(p < c.sum_params().size(), ErrorKind::Contract, "multiply: sum parameter counts differ");
      const SumParam& sp = c.sum_params()[p];
      if (const auto* dw = std::get_if<DenseWeights>(&sp)) {
        kernels.push_back(dw->w);
        all_identity = false;
      } else if (const auto* id = std::get_if<IdentityMap>(&sp)) {
        kernels.push_back(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(id->size),
                                                    static_cast<Eigen::Index>(id->size)));
        identity *= id->size;
      } else {
        raise(ErrorKind::Unsupported,
              "multiply: sum parameter " + std::to_string(p) + " of circuit is " + param_kind(sp) +
                  "; only dense inputs can be multiplied");
      }
    }
    if (all_identity) sums.emplace_back(IdentityMap{identity});
    else sums.emplace_back(MonarchFactorization::kronecker(kernels));
  }

  CircuitGraph out(std::move(blocks), base.root(), std::move(leaves), std::move(sums), false);
  out.metadata = base.metadata;
  out.metadata["product_factors"] = std::to_string(d);
  return out;
}

CircuitGraph multiply(std::span<const CircuitGraph> circuits) {
  const auto cert = check_compatible(circuits);
  return multiply(circuits, cert);
}

CircuitGraph untie(const CircuitGraph& circuit) {
  CircuitGraph out = circuit;
  for (auto& p : out.sum_params()) {
    if (auto* f = std::get_if<MonarchFactorization>(&p)) f->untie();
  }
  return out;
}

namespace {

// Node masses of one block, stored as scale * z with max(z) = 1 (or z = 0).
struct Mass {
  std::vector<double> z;
  double log_scale = 0.0;

  void rescale() {
    const double mx = z.empty() ? 0.0 : *std::max_element(z.begin(), z.end());
    if (mx > 0.0) {
      for (double& v : z) v /= mx;
      log_scale += std::log(mx);
    }
  }
};

// Divides a row by its sum; an all-zero row becomes uniform. Returns the sum.
double normalize_row(std::span<double> row, std::size_t& dead) {
  double s = 0.0;
  for (double v : row) s += v;
  if (s > 0.0) {
    for (double& v : row) v /= s;
  } else {
    const double u = 1.0 / static_cast<double>(row.size());
    for (double& v : row) v = u;
    ++dead;
  }
  return s;
}

}  // namespace

CircuitGraph unshare_parameters(const CircuitGraph& circuit) {
  std::vector<Block> blocks = circuit.blocks();
  std::vector<LeafTable> leaves;
  std::vector<SumParam> sums;
  for (Block& b : blocks) {
    if (b.kind == BlockKind::Leaf) {
      leaves.push_back(circuit.leaf_tables()[b.param]);
      b.param = leaves.size() - 1;
    } else if (b.kind == BlockKind::Sum) {
      sums.push_back(circuit.sum_params()[b.param]);
      b.param = sums.size() - 1;
    }
  }
  CircuitGraph out(std::move(blocks), circuit.root(), std::move(leaves), std::move(sums), circuit.normalized());
  out.metadata = circuit.metadata;
  return out;
}

namespace {

Renormalized renormalize_local(const CircuitGraph& circuit) {
  Renormalized res{untie(circuit), marginalize_log(circuit, {}), 0};
  for (auto& t : res.circuit.leaf_tables()) {
    for (std::size_t k = 0; k < t.rows; ++k) normalize_row(t.row(k), res.dead_rows);
  }
  for (auto& p : res.circuit.sum_params()) {
    if (auto* dw = std::get_if<DenseWeights>(&p)) {
      for (Eigen::Index j = 0; j < dw->w.rows(); ++j) {
        std::vector<double> row(dw->cols());
        for (std::size_t i = 0; i < row.size(); ++i) row[i] = dw->w(j, static_cast<Eigen::Index>(i));
        normalize_row(row, res.dead_rows);
        for (std::size_t i = 0; i < row.size(); ++i) dw->w(j, static_cast<Eigen::Index>(i)) = row[i];
      }
    } else if (auto* f = std::get_if<MonarchFactorization>(&p)) {
      for (std::size_t t = 0; t < f->depth(); ++t) {
        const std::size_t ni = f->layer_in(t);
        auto layer = f->layer(t);
        for (std::size_t off = 0; off < layer.size(); off += ni) normalize_row(layer.subspan(off, ni), res.dead_rows);
      }
    }
  }
  res.circuit.set_normalized(true);
  return res;
}

}  // namespace

Renormalized renormalize(const CircuitGraph& circuit, RenormalizeMode mode) {
  if (mode == RenormalizeMode::KeepSharing) return renormalize_local(circuit);
  Renormalized res{untie(unshare_parameters(circuit)), 0.0, 0};
  CircuitGraph& g = res.circuit;
  std::vector<bool> leaf_done(g.leaf_tables().size(), false), sum_done(g.sum_params().size(), false);
  std::vector<std::vector<double>> leaf_mass(g.leaf_tables().size());
  std::vector<Mass> sum_mass(g.sum_params().size());
  std::vector<Mass> mass(g.num_blocks());

  for (BlockId id = 0; id < g.num_blocks(); ++id) {
    const Block& b = g.block(id);
    Mass& m = mass[id];
    switch (b.kind) {
      case BlockKind::Leaf: {
        if (!leaf_done[b.param]) {
          LeafTable& t = g.leaf_tables()[b.param];
          leaf_mass[b.param].resize(t.rows);
          for (std::size_t k = 0; k < t.rows; ++k) leaf_mass[b.param][k] = normalize_row(t.row(k), res.dead_rows);
          leaf_done[b.param] = true;
        }
        m.z = leaf_mass[b.param];
        break;
      }
      case BlockKind::Product: {
        if (b.product == ProductKind::Hadamard) {
          m.z.assign(b.size, 1.0);
          for (BlockId c : b.children) {
            for (std::size_t k = 0; k < b.size; ++k) m.z[k] *= mass[c].z[k];
            m.log_scale += mass[c].log_scale;
          }
        } else {
          m.z.assign(b.size, 1.0);
          for (std::size_t idx = 0; idx < b.size; ++idx) {
            std::size_t rem = idx;
            for (std::size_t c = b.children.size(); c-- > 0;) {
              const auto& zc = mass[b.children[c]].z;
              m.z[idx] *= zc[rem % zc.size()];
              rem /= zc.size();
            }
          }
          for (BlockId c : b.children) m.log_scale += mass[c].log_scale;
        }
        break;
      }
      case BlockKind::Sum: {
        Mass in;
        // Children share a scope; their scales generally differ, so bring them to a common one.
        double common = -std::numeric_limits<double>::infinity();
        for (BlockId c : b.children) {
          const bool any = std::any_of(mass[c].z.begin(), mass[c].z.end(), [](double v) { return v > 0.0; });
          if (any) common = std::max(common, mass[c].log_scale);
        }
        if (!std::isfinite(common)) common = 0.0;
        for (BlockId c : b.children) {
          const double f = std::exp(mass[c].log_scale - common);
          for (double v : mass[c].z) in.z.push_back(v * f);
        }
        in.log_scale = common;
        if (!sum_done[b.param]) {
          SumParam& p = g.sum_params()[b.param];
          Mass out;
          if (auto* dw = std::get_if<DenseWeights>(&p)) {
            out.z.resize(dw->rows());
            for (Eigen::Index j = 0; j < dw->w.rows(); ++j) {
              std::vector<double> row(dw->cols());
              for (std::size_t i = 0; i < row.size(); ++i) {
                row[i] = dw->w(j, static_cast<Eigen::Index>(i)) * in.z[i];
              }
              out.z[static_cast<std::size_t>(j)] = normalize_row(row, res.dead_rows);
              for (std::size_t i = 0; i < row.size(); ++i) dw->w(j, static_cast<Eigen::Index>(i)) = row[i];
            }
          } else if (auto* f = std::get_if<MonarchFactorization>(&p)) {
            std::vector<double> cur = in.z;
            for (std::size_t t = 0; t < f->depth(); ++t) {
              const std::size_t mo = f->layer_out(t), ni = f->layer_in(t), R = f->layer_batch(t);
              std::vector<double> next(R * mo);
              for (std::size_t r = 0; r < R; ++r) {
                auto slice = f->slice(t, r);
                for (std::size_t j = 0; j < mo; ++j) {
                  auto row = slice.subspan(j * ni, ni);
                  for (std::size_t i = 0; i < ni; ++i) row[i] *= cur[i * R + r];
                  next[r * mo + j] = normalize_row(row, res.dead_rows);
                }
              }
              cur = std::move(next);
              const double mx = *std::max_element(cur.begin(), cur.end());
              if (mx > 0.0) {
                for (double& v : cur) v /= mx;
                out.log_scale += std::log(mx);
              }
            }
            out.z = std::move(cur);
          } else {
            out.z = in.z;
          }
          sum_mass[b.param] = std::move(out);
          sum_done[b.param] = true;
        }
        m.z = sum_mass[b.param].z;
        m.log_scale = in.log_scale + sum_mass[b.param].log_scale;
        break;
      }
    }
    m.rescale();
  }
  const Mass& root = mass[g.root()];
  res.log_partition = root.z.empty() || root.z[0] <= 0.0
                          ? -std::numeric_limits<double>::infinity()
                          : root.log_scale + std::log(root.z[0]);
  g.set_normalized(true);
  return res;
}

}  // namespace moncirc
