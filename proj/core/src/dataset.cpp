#include "moncirc/dataset.hpp"

#include <fstream>
#include <sstream>

#include "moncirc/error.hpp"

namespace moncirc {

namespace fs = std::filesystem;

void DatasetShard::check() const {
  require(values.size() == items * variables, ErrorKind::Data,
          "shard is not rectangular: " + std::to_string(values.size()) + " values for " +
              std::to_string(items) + "x" + std::to_string(variables));
  for (std::size_t k = 0; k < values.size(); ++k) {
    require(values[k] >= 0 && static_cast<std::size_t>(values[k]) < vocab, ErrorKind::Data,
            "shard entry " + std::to_string(values[k]) + " at item " +
                std::to_string(k / std::max<std::size_t>(variables, 1)) + " outside vocabulary " +
                std::to_string(vocab));
  }
}

DatasetShard DatasetShard::subset(std::span<const std::size_t> rows) const {
  DatasetShard out{rows.size(), variables, vocab, {}, provenance};
  out.values.reserve(rows.size() * variables);
  for (std::size_t r : rows) {
    require(r < items, ErrorKind::Contract, "subset: row out of range");
    auto src = row(r);
    out.values.insert(out.values.end(), src.begin(), src.end());
  }
  return out;
}

DatasetShard DatasetShard::slice(std::size_t begin, std::size_t end) const {
  require(begin <= end && end <= items, ErrorKind::Contract, "slice: bad range");
  DatasetShard out{end - begin, variables, vocab, {}, provenance};
  out.values.assign(values.begin() + static_cast<std::ptrdiff_t>(begin * variables),
                    values.begin() + static_cast<std::ptrdiff_t>(end * variables));
  return out;
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

DatasetShard load_text_chunks(std::span<const std::uint8_t> bytes, std::size_t chunk_length) {
  require(chunk_length > 0, ErrorKind::Config, "chunk length must be positive");
  DatasetShard shard;
  shard.variables = chunk_length;
  shard.vocab = kTextVocab;
  shard.items = bytes.size() / chunk_length;
  shard.provenance = "text chunk=" + std::to_string(chunk_length);
  shard.values.resize(shard.items * chunk_length);
  for (std::size_t k = 0; k < bytes.size(); ++k) {
    const std::uint8_t c = bytes[k];
    std::int32_t code;
    if (c >= 'a' && c <= 'z') code = c - 'a';
    else if (c == ' ') code = 26;
    else {
      raise(ErrorKind::Data, "illegal byte 0x" + [&] {
        std::ostringstream os;
        os << std::hex << static_cast<int>(c);
        return os.str();
      }() + " at offset " + std::to_string(k));
    }
    if (k < shard.values.size()) shard.values[k] = code;
  }
  return shard;
}

DatasetShard load_text_file(const fs::path& path, std::size_t chunk_length) {
  auto shard = load_text_chunks(read_bytes(path), chunk_length);
  shard.provenance += " file=" + path.filename().string();
  return shard;
}

char text_symbol(std::int32_t code) {
  if (code >= 0 && code < 26) return static_cast<char>('a' + code);
  return ' ';
}

DatasetShard load_token_sequences(std::span<const std::int32_t> tokens, std::size_t seq_len,
                                  std::size_t vocab) {
  require(seq_len > 0, ErrorKind::Config, "sequence length must be positive");
  require(vocab > 0, ErrorKind::Config, "vocabulary must be positive");
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    require(tokens[k] >= 0 && static_cast<std::size_t>(tokens[k]) < vocab, ErrorKind::Data,
            "token " + std::to_string(tokens[k]) + " at position " + std::to_string(k) +
                " outside vocabulary " + std::to_string(vocab));
  }
  DatasetShard shard;
  shard.variables = seq_len;
  shard.vocab = vocab;
  shard.items = tokens.size() / seq_len;
  shard.provenance = "tokens seq=" + std::to_string(seq_len);
  shard.values.assign(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(shard.items * seq_len));
  return shard;
}

DatasetShard load_token_file(const fs::path& path, std::size_t seq_len, std::size_t vocab) {
  const auto bytes = read_bytes(path);
  require(bytes.size() % 4 == 0, ErrorKind::Data,
          path.string() + ": size is not a multiple of 4 bytes");
  std::vector<std::int32_t> tokens(bytes.size() / 4);
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    const std::uint32_t u = static_cast<std::uint32_t>(bytes[4 * k]) |
                            static_cast<std::uint32_t>(bytes[4 * k + 1]) << 8 |
                            static_cast<std::uint32_t>(bytes[4 * k + 2]) << 16 |
                            static_cast<std::uint32_t>(bytes[4 * k + 3]) << 24;
    tokens[k] = static_cast<std::int32_t>(u);
  }
  auto shard = load_token_sequences(tokens, seq_len, vocab);
  shard.provenance += " file=" + path.filename().string();
  return shard;
}

namespace {

// Reads "key value" header lines up to a line "end"; returns the map and
// leaves the stream positioned at the payload.
std::vector<std::pair<std::string, std::string>> read_header(std::istream& in,
                                                             const std::string& magic,
                                                             const std::string& what) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)) && line == magic, ErrorKind::Data,
          what + ": bad magic line");
  std::vector<std::pair<std::string, std::string>> kv;
  while (std::getline(in, line)) {
    if (line == "end") return kv;
    std::istringstream ls(line);
    std::string key, value;
    ls >> key;
    std::getline(ls >> std::ws, value);
    kv.emplace_back(key, value);
  }
  raise(ErrorKind::Data, what + ": header not terminated");
}

std::size_t header_size(const std::vector<std::pair<std::string, std::string>>& kv,
                        const std::string& key, const std::string& what) {
  for (const auto& [k, v] : kv) {
    if (k == key) {
      try {
        return static_cast<std::size_t>(std::stoull(v));
      } catch (const std::exception&) {
        raise(ErrorKind::Data, what + ": bad value for " + key);
      }
    }
  }
  raise(ErrorKind::Data, what + ": missing header field " + key);
}

}  // namespace

ImageSet read_image_container(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  const auto kv = read_header(in, "moncirc-images 1", path.string());
  ImageSet set;
  set.count = header_size(kv, "count", path.string());
  set.height = header_size(kv, "height", path.string());
  set.width = header_size(kv, "width", path.string());
  set.pixels.resize(set.count * set.height * set.width * 3);
  in.read(reinterpret_cast<char*>(set.pixels.data()), static_cast<std::streamsize>(set.pixels.size()));
  require(static_cast<std::size_t>(in.gcount()) == set.pixels.size(), ErrorKind::Data,
          path.string() + ": truncated pixel payload");
  return set;
}

void write_image_container(const fs::path& path, const ImageSet& images) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out << "moncirc-images 1\ncount " << images.count << "\nheight " << images.height << "\nwidth "
      << images.width << "\nend\n";
  out.write(reinterpret_cast<const char*>(images.pixels.data()),
            static_cast<std::streamsize>(images.pixels.size()));
}

void write_shard(const fs::path& path, const DatasetShard& shard) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out << "moncirc-shard 1\nitems " << shard.items << "\nvariables " << shard.variables
      << "\nvocab " << shard.vocab << "\nprovenance " << shard.provenance << "\nend\n";
  std::vector<char> buf(shard.values.size() * 4);
  for (std::size_t k = 0; k < shard.values.size(); ++k) {
    const auto u = static_cast<std::uint32_t>(shard.values[k]);
    for (int b = 0; b < 4; ++b) buf[4 * k + b] = static_cast<char>((u >> (8 * b)) & 0xffu);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

DatasetShard read_shard(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  const auto kv = read_header(in, "moncirc-shard 1", path.string());
  DatasetShard shard;
  shard.items = header_size(kv, "items", path.string());
  shard.variables = header_size(kv, "variables", path.string());
  shard.vocab = header_size(kv, "vocab", path.string());
  for (const auto& [k, v] : kv) {
    if (k == "provenance") shard.provenance = v;
  }
  std::vector<unsigned char> buf(shard.items * shard.variables * 4);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  require(static_cast<std::size_t>(in.gcount()) == buf.size(), ErrorKind::Data,
          path.string() + ": truncated shard payload");
  shard.values.resize(shard.items * shard.variables);
  for (std::size_t k = 0; k < shard.values.size(); ++k) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(buf[4 * k + b]) << (8 * b);
    shard.values[k] = static_cast<std::int32_t>(u);
  }
  shard.check();
  return shard;
}

}  // namespace moncirc
