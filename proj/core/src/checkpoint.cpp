#include "moncirc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "moncirc/dataset.hpp"
#include "moncirc/error.hpp"

namespace moncirc {

namespace {

constexpr const char* kMagic = "moncirc-checkpoint 1";

std::string scope_ranges(const VariableScope& scope) {
  std::string out;
  for (std::size_t k = 0; k < scope.size();) {
    std::size_t e = k;
    while (e + 1 < scope.size() && scope[e + 1] == scope[e] + 1) ++e;
    if (!out.empty()) out += ",";
    out += std::to_string(scope[k]);
    if (e > k) out += "-" + std::to_string(scope[e]);
    k = e + 1;
  }
  return out;
}

void put_f64(std::string& out, double v) {
  auto u = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((u >> (8 * b)) & 0xffu));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t pos) : bytes_(bytes), pos_(pos) {}
  double f64() {
    require(pos_ + 8 <= bytes_.size(), ErrorKind::Io, "checkpoint payload is truncated");
    std::uint64_t u = 0;
    for (int b = 0; b < 8; ++b) u |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
    pos_ += 8;
    return std::bit_cast<double>(u);
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string& bytes_;
  std::size_t pos_;
};

std::size_t to_size(const std::string& s) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used == s.size()) return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
  }
  raise(ErrorKind::Io, "checkpoint manifest: bad integer '" + s + "'");
}

}  // namespace

std::string serialize_checkpoint(const CircuitGraph& g) {
  std::ostringstream m;
  m << kMagic << "\n";
  m << "normalized " << (g.normalized() ? 1 : 0) << "\n";
  m << "root " << g.root() << "\n";
  for (const auto& [k, v] : g.metadata) {
    require(k.find_first_of(" \n") == std::string::npos && v.find('\n') == std::string::npos, ErrorKind::Io,
            "metadata entry '" + k + "' cannot be stored");
    m << "meta " << k << " " << v << "\n";
  }
  std::size_t payload = 0;
  for (const auto& t : g.leaf_tables()) {
    m << "leaf " << t.rows << " " << t.vocab << "\n";
    payload += t.probs.size();
  }
  for (const auto& p : g.sum_params()) {
    if (const auto* d = std::get_if<DenseWeights>(&p)) {
      m << "sum dense " << d->rows() << " " << d->cols() << "\n";
    } else if (const auto* f = std::get_if<MonarchFactorization>(&p)) {
      m << "sum monarch " << (f->tied() ? 1 : 0) << " " << f->depth() << " in";
      for (auto n : f->in_dims()) m << " " << n;
      m << " out";
      for (auto n : f->out_dims()) m << " " << n;
      m << "\n";
    } else {
      m << "sum identity " << std::get<IdentityMap>(p).size << "\n";
    }
    payload += param_count(p);
  }
  for (BlockId id = 0; id < g.num_blocks(); ++id) {
    const Block& b = g.block(id);
    switch (b.kind) {
      case BlockKind::Leaf:
        m << "block leaf " << b.size << " var " << b.variable << " table " << b.param;
        break;
      case BlockKind::Product:
        m << "block " << (b.product == ProductKind::Hadamard ? "hadamard " : "kronecker ") << b.size << " children";
        for (auto c : b.children) m << " " << c;
        break;
      case BlockKind::Sum:
        m << "block sum " << b.size << " param " << b.param << " children";
        for (auto c : b.children) m << " " << c;
        break;
    }
    m << " scope " << scope_ranges(g.scope(id)) << "\n";
  }
  m << "payload " << payload << "\nend\n";

  std::string out = m.str();
  out.reserve(out.size() + payload * 8);
  for (const auto& t : g.leaf_tables()) {
    for (double v : t.probs) put_f64(out, v);
  }
  for (const auto& p : g.sum_params()) {
    if (const auto* d = std::get_if<DenseWeights>(&p)) {
      for (Eigen::Index j = 0; j < d->w.rows(); ++j) {
        for (Eigen::Index i = 0; i < d->w.cols(); ++i) put_f64(out, d->w(j, i));
      }
    } else if (const auto* f = std::get_if<MonarchFactorization>(&p)) {
      for (std::size_t t = 0; t < f->depth(); ++t) {
        for (double v : f->layer(t)) put_f64(out, v);
      }
    }
  }
  return out;
}

CircuitGraph deserialize_checkpoint(const std::string& bytes) {
  const auto end_pos = bytes.find("\nend\n");
  require(bytes.rfind(kMagic, 0) == 0 && end_pos != std::string::npos, ErrorKind::Io,
          "not a moncirc checkpoint");
  std::istringstream in(bytes.substr(0, end_pos + 1));
  std::string line;
  std::getline(in, line);

  bool normalized = false;
  BlockId root = 0;
  std::size_t payload = 0;
  std::map<std::string, std::string> meta;
  std::vector<LeafTable> leaves;
  std::vector<SumParam> sums;
  std::vector<Block> blocks;
  std::vector<std::string> scopes;

  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "normalized") {
      std::string v;
      ls >> v;
      normalized = v == "1";
    } else if (tag == "root") {
      std::string v;
      ls >> v;
      root = to_size(v);
    } else if (tag == "meta") {
      std::string key, value;
      ls >> key;
      if (ls.peek() == ' ') ls.get();
      std::getline(ls, value);
      meta[key] = value;
    } else if (tag == "leaf") {
      std::string r, v;
      ls >> r >> v;
      LeafTable t;
      t.rows = to_size(r);
      t.vocab = to_size(v);
      leaves.push_back(std::move(t));
    } else if (tag == "sum") {
      std::string kind;
      ls >> kind;
      if (kind == "dense") {
        std::string o, i;
        ls >> o >> i;
        sums.emplace_back(DenseWeights{Eigen::MatrixXd(static_cast<Eigen::Index>(to_size(o)),
                                                       static_cast<Eigen::Index>(to_size(i)))});
      } else if (kind == "monarch") {
        std::string tied, depth, word;
        ls >> tied >> depth >> word;
        const std::size_t d = to_size(depth);
        require(word == "in", ErrorKind::Io, "checkpoint manifest: malformed monarch line");
        std::vector<std::size_t> ins(d), outs(d);
        for (auto& n : ins) {
          ls >> word;
          n = to_size(word);
        }
        ls >> word;
        require(word == "out", ErrorKind::Io, "checkpoint manifest: malformed monarch line");
        for (auto& n : outs) {
          ls >> word;
          n = to_size(word);
        }
        MonarchFactorization f(ins, outs);
        f.set_tied(tied == "1");
        sums.emplace_back(std::move(f));
      } else if (kind == "identity") {
        std::string s;
        ls >> s;
        sums.emplace_back(IdentityMap{to_size(s)});
      } else {
        raise(ErrorKind::Io, "checkpoint manifest: unknown sum kind '" + kind + "'");
      }
    } else if (tag == "block") {
      std::string kind, size, word;
      ls >> kind >> size;
      Block b;
      b.size = to_size(size);
      std::vector<BlockId> children;
      auto read_children = [&] {
        while (ls >> word && word != "scope") children.push_back(to_size(word));
      };
      if (kind == "leaf") {
        std::string var, table;
        ls >> word >> var >> word >> table >> word;
        b = Block::leaf(to_size(var), b.size, to_size(table));
      } else if (kind == "hadamard" || kind == "kronecker") {
        ls >> word;
        read_children();
        b = kind == "hadamard" ? Block::hadamard(children, b.size) : Block::kronecker(children, b.size);
      } else if (kind == "sum") {
        std::string param;
        ls >> word >> param >> word;
        read_children();
        b = Block::sum(children, b.size, to_size(param));
      } else {
        raise(ErrorKind::Io, "checkpoint manifest: unknown block kind '" + kind + "'");
      }
      std::string scope;
      ls >> scope;
      scopes.push_back(scope);
      blocks.push_back(std::move(b));
    } else if (tag == "payload") {
      std::string v;
      ls >> v;
      payload = to_size(v);
    } else if (!tag.empty()) {
      raise(ErrorKind::Io, "checkpoint manifest: unknown line '" + line + "'");
    }
  }

  Reader rd(bytes, end_pos + 5);
  require(rd.remaining() == payload * 8, ErrorKind::Io,
          "checkpoint payload has " + std::to_string(rd.remaining()) + " bytes, manifest declares " +
              std::to_string(payload * 8));
  for (auto& t : leaves) {
    t.probs.resize(t.rows * t.vocab);
    for (double& v : t.probs) v = rd.f64();
  }
  for (auto& p : sums) {
    if (auto* d = std::get_if<DenseWeights>(&p)) {
      for (Eigen::Index j = 0; j < d->w.rows(); ++j) {
        for (Eigen::Index i = 0; i < d->w.cols(); ++i) d->w(j, i) = rd.f64();
      }
    } else if (auto* f = std::get_if<MonarchFactorization>(&p)) {
      for (std::size_t t = 0; t < f->depth(); ++t) {
        for (double& v : f->layer(t)) v = rd.f64();
      }
    }
  }
  CircuitGraph g(std::move(blocks), root, std::move(leaves), std::move(sums), normalized);
  for (BlockId id = 0; id < g.num_blocks(); ++id) {
    require(scope_ranges(g.scope(id)) == scopes[id], ErrorKind::Io,
            "checkpoint manifest: block " + std::to_string(id) + " scope does not match its children");
  }
  g.metadata = std::move(meta);
  return g;
}

void save_checkpoint(const std::filesystem::path& path, const CircuitGraph& circuit) {
  const std::string bytes = serialize_checkpoint(circuit);
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorKind::Io, "failed writing " + path.string());
}

CircuitGraph load_checkpoint(const std::filesystem::path& path) {
  const auto raw = read_bytes(path);
  return deserialize_checkpoint(std::string(raw.begin(), raw.end()));
}

}  // namespace moncirc
