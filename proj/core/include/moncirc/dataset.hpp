#pragma once

// Integer-valued datasets and the loaders / color transforms that produce them.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace moncirc {

/// Rectangular items x variables matrix of categorical observations.
/// Entries lie in [0, vocab); kMissing marks an unobserved variable in
/// query rows (never in training data).
struct DatasetShard {
  std::size_t items = 0;
  std::size_t variables = 0;
  std::size_t vocab = 0;
  std::vector<std::int32_t> values;  // row-major
  std::string provenance;

  std::span<const std::int32_t> row(std::size_t i) const {
    return std::span<const std::int32_t>(values).subspan(i * variables, variables);
  }
  std::int32_t at(std::size_t i, std::size_t v) const { return values[i * variables + v]; }

  /// Throws Data if the matrix is not rectangular or an entry is out of range.
  void check() const;
  /// Rows selected by index, in the given order.
  DatasetShard subset(std::span<const std::size_t> rows) const;
  /// Rows [begin, end).
  DatasetShard slice(std::size_t begin, std::size_t end) const;
};

inline constexpr std::int32_t kMissing = -1;

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

// Text: 'a'..'z' -> 0..25, ' ' -> 26.
inline constexpr std::size_t kTextVocab = 27;
inline constexpr std::size_t kTextChunk = 256;

/// Consecutive non-overlapping chunks; the trailing remainder is dropped.
/// Throws Data naming the offset of the first byte outside [a-z ].
DatasetShard load_text_chunks(std::span<const std::uint8_t> bytes, std::size_t chunk_length = kTextChunk);
DatasetShard load_text_file(const std::filesystem::path& path, std::size_t chunk_length = kTextChunk);
char text_symbol(std::int32_t code);

inline constexpr std::size_t kTokenSequence = 128;

/// Packs pre-tokenized ids into rows of seq_len; the remainder is dropped.
DatasetShard load_token_sequences(std::span<const std::int32_t> tokens, std::size_t seq_len,
                                  std::size_t vocab);
/// Little-endian 32-bit integer file.
DatasetShard load_token_file(const std::filesystem::path& path, std::size_t seq_len, std::size_t vocab);

// Color transforms.
struct YCoCg {
  int y = 0;
  int co = 0;
  int cg = 0;
  friend bool operator==(const YCoCg&, const YCoCg&) = default;
};

struct Rgb {
  int r = 0;
  int g = 0;
  int b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Lossless integer YCoCg-R with floor division.
YCoCg ycocg_r_forward(int r, int g, int b);
/// Exact inverse; throws Domain when the triple is not the image of a valid RGB pixel.
Rgb ycocg_r_inverse(int y, int co, int cg);

struct LossyYCoCg {
  double y = 0, co = 0, cg = 0;  // real-valued, before quantization
  int yq = 0, coq = 0, cgq = 0;  // bins in [0, 255]
  bool clamped = false;          // some channel fell outside [-1, 1]
};

/// Quantized real YCoCg: each channel in [-1, 1] mapped uniformly onto 256 bins.
LossyYCoCg ycocg_lossy_forward(int r, int g, int b);

/// Offset that maps lossless Co / Cg from [-255, 255] onto categorical symbols [0, 510].
inline constexpr int kChromaShift = 255;
inline constexpr std::size_t kLosslessVocab = 511;

enum class ColorTransform { Rgb, LosslessYCoCg, LossyYCoCg };
std::string to_string(ColorTransform t);
ColorTransform parse_color_transform(const std::string& s);

/// count images of height x width x 3 bytes, channel-last, row-major.
struct ImageSet {
  std::size_t count = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t n, std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[((n * height + y) * width + x) * 3 + c];
  }
};

/// Container: text header "moncirc-images 1 / count / height / width / end" then raw bytes.
ImageSet read_image_container(const std::filesystem::path& path);
void write_image_container(const std::filesystem::path& path, const ImageSet& images);

/// Aligned non-overlapping patch x patch x 3 tiles flattened channel-last
/// row-major, optionally color-transformed. Vocab is 256, or 511 for lossless
/// YCoCg-R (chroma channels shifted by kChromaShift).
DatasetShard extract_patches(const ImageSet& images, std::size_t patch = 8,
                             ColorTransform transform = ColorTransform::Rgb);

/// Inverse of extract_patches for the Rgb and lossless transforms: rebuilds
/// images of the given size from consecutive patches (one image per
/// (height/patch)*(width/patch) items).
ImageSet assemble_patches(const DatasetShard& patches, std::size_t height, std::size_t width,
                          std::size_t patch = 8, ColorTransform transform = ColorTransform::Rgb);

/// Shard container: text header then little-endian int32 values.
void write_shard(const std::filesystem::path& path, const DatasetShard& shard);
DatasetShard read_shard(const std::filesystem::path& path);

}  // namespace moncirc
