#include <algorithm>
#include <cmath>

#include "moncirc/dataset.hpp"
#include "moncirc/error.hpp"

namespace moncirc {

namespace {

// Arithmetic shift floors toward -inf for negatives; plain '/' would truncate.
int floor_half(int v) { return v >> 1; }

void check_channel(int v, const char* name) {
  require(v >= 0 && v <= 255, ErrorKind::Domain,
          std::string("channel ") + name + " = " + std::to_string(v) + " outside [0, 255]");
}

int quantize_unit(double v, bool& clamped) {
  if (v < -1.0 || v > 1.0) {
    clamped = true;
    v = std::clamp(v, -1.0, 1.0);
  }
  const int bin = static_cast<int>(std::floor((v + 1.0) / 2.0 * 256.0));
  return std::clamp(bin, 0, 255);
}

}  // namespace

YCoCg ycocg_r_forward(int r, int g, int b) {
  check_channel(r, "R");
  check_channel(g, "G");
  check_channel(b, "B");
  const int co = r - b;
  const int tmp = b + floor_half(co);
  const int cg = g - tmp;
  const int y = tmp + floor_half(cg);
  return {y, co, cg};
}

Rgb ycocg_r_inverse(int y, int co, int cg) {
  const int tmp = y - floor_half(cg);
  const int g = cg + tmp;
  const int b = tmp - floor_half(co);
  const int r = b + co;
  require(r >= 0 && r <= 255 && g >= 0 && g <= 255 && b >= 0 && b <= 255, ErrorKind::Domain,
          "(" + std::to_string(y) + ", " + std::to_string(co) + ", " + std::to_string(cg) +
              ") is not the YCoCg-R image of an RGB pixel");
  return {r, g, b};
}

LossyYCoCg ycocg_lossy_forward(int r, int g, int b) {
  check_channel(r, "R");
  check_channel(g, "G");
  check_channel(b, "B");
  LossyYCoCg out;
  const double rr = r / 255.0, gg = g / 255.0, bb = b / 255.0;
  out.co = rr - bb;
  const double tmp = bb + out.co / 2.0;
  out.cg = gg - tmp;
  out.y = tmp * 2.0 + out.cg + 1.0;
  out.yq = quantize_unit(out.y, out.clamped);
  out.coq = quantize_unit(out.co, out.clamped);
  out.cgq = quantize_unit(out.cg, out.clamped);
  return out;
}

std::string to_string(ColorTransform t) {
  switch (t) {
    case ColorTransform::Rgb: return "rgb";
    case ColorTransform::LosslessYCoCg: return "ycocg-r";
    case ColorTransform::LossyYCoCg: return "ycocg-lossy";
  }
  return "rgb";
}

ColorTransform parse_color_transform(const std::string& s) {
  if (s == "rgb") return ColorTransform::Rgb;
  if (s == "ycocg-r" || s == "lossless") return ColorTransform::LosslessYCoCg;
  if (s == "ycocg-lossy" || s == "lossy") return ColorTransform::LossyYCoCg;
  raise(ErrorKind::Config, "unknown color transform '" + s + "'");
}

DatasetShard extract_patches(const ImageSet& images, std::size_t patch, ColorTransform transform) {
  require(patch > 0, ErrorKind::Config, "patch size must be positive");
  require(images.height % patch == 0 && images.width % patch == 0, ErrorKind::Data,
          "image size " + std::to_string(images.height) + "x" + std::to_string(images.width) +
              " is not divisible by patch size " + std::to_string(patch));
  require(images.pixels.size() == images.count * images.height * images.width * 3, ErrorKind::Data,
          "image payload does not match its header");
  const std::size_t per_row = images.width / patch, per_col = images.height / patch;
  DatasetShard shard;
  shard.items = images.count * per_row * per_col;
  shard.variables = patch * patch * 3;
  shard.vocab = transform == ColorTransform::LosslessYCoCg ? kLosslessVocab : 256;
  shard.provenance = "patches " + std::to_string(patch) + " color=" + to_string(transform);
  shard.values.reserve(shard.items * shard.variables);
  for (std::size_t n = 0; n < images.count; ++n) {
    for (std::size_t py = 0; py < per_col; ++py) {
      for (std::size_t px = 0; px < per_row; ++px) {
        for (std::size_t y = 0; y < patch; ++y) {
          for (std::size_t x = 0; x < patch; ++x) {
            const int r = images.at(n, py * patch + y, px * patch + x, 0);
            const int g = images.at(n, py * patch + y, px * patch + x, 1);
            const int b = images.at(n, py * patch + y, px * patch + x, 2);
            switch (transform) {
              case ColorTransform::Rgb:
                shard.values.insert(shard.values.end(), {r, g, b});
                break;
              case ColorTransform::LosslessYCoCg: {
                const auto c = ycocg_r_forward(r, g, b);
                shard.values.insert(shard.values.end(),
                                    {c.y, c.co + kChromaShift, c.cg + kChromaShift});
                break;
              }
              case ColorTransform::LossyYCoCg: {
                const auto c = ycocg_lossy_forward(r, g, b);
                shard.values.insert(shard.values.end(), {c.yq, c.coq, c.cgq});
                break;
              }
            }
          }
        }
      }
    }
  }
  return shard;
}

ImageSet assemble_patches(const DatasetShard& patches, std::size_t height, std::size_t width,
                          std::size_t patch, ColorTransform transform) {
  require(transform != ColorTransform::LossyYCoCg, ErrorKind::Unsupported,
          "the lossy YCoCg transform has no inverse");
  require(patch > 0 && height % patch == 0 && width % patch == 0, ErrorKind::Data,
          "image size is not divisible by patch size");
  require(patches.variables == patch * patch * 3, ErrorKind::Dimension,
          "patch shard has the wrong number of variables");
  const std::size_t per_row = width / patch, per_col = height / patch;
  const std::size_t per_image = per_row * per_col;
  require(patches.items % per_image == 0, ErrorKind::Data,
          "patch count is not a multiple of patches per image");
  ImageSet set;
  set.count = patches.items / per_image;
  set.height = height;
  set.width = width;
  set.pixels.resize(set.count * height * width * 3);
  for (std::size_t item = 0; item < patches.items; ++item) {
    const std::size_t n = item / per_image, p = item % per_image;
    const std::size_t py = p / per_row, px = p % per_row;
    for (std::size_t y = 0; y < patch; ++y) {
      for (std::size_t x = 0; x < patch; ++x) {
        const std::size_t base = (y * patch + x) * 3;
        int c0 = patches.at(item, base), c1 = patches.at(item, base + 1), c2 = patches.at(item, base + 2);
        if (transform == ColorTransform::LosslessYCoCg) {
          const auto rgb = ycocg_r_inverse(c0, c1 - kChromaShift, c2 - kChromaShift);
          c0 = rgb.r;
          c1 = rgb.g;
          c2 = rgb.b;
        }
        const std::size_t off = ((n * height + py * patch + y) * width + px * patch + x) * 3;
        set.pixels[off] = static_cast<std::uint8_t>(c0);
        set.pixels[off + 1] = static_cast<std::uint8_t>(c1);
        set.pixels[off + 2] = static_cast<std::uint8_t>(c2);
      }
    }
  }
  return set;
}

}  // namespace moncirc
