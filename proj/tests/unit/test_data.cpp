#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "moncirc/dataset.hpp"
#include "moncirc/error.hpp"
#include "moncirc/random.hpp"

using namespace moncirc;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

std::string repeat_ab(std::size_t n) {
  std::string s;
  for (std::size_t k = 0; k < n; ++k) s.push_back(k % 2 ? 'b' : 'a');
  return s;
}

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::Io;
}

ImageSet random_images(std::size_t count, std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  ImageSet s{count, h, w, {}};
  s.pixels.resize(count * h * w * 3);
  for (auto& p : s.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  return s;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("moncirc_test_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

TEST(Text, ChunksAndMapping) {
  const auto d = load_text_chunks(bytes_of(repeat_ab(512)));
  EXPECT_EQ(d.items, 2u);
  EXPECT_EQ(d.variables, 256u);
  EXPECT_EQ(d.vocab, 27u);
  EXPECT_EQ(d.at(0, 0), 0);
  EXPECT_EQ(d.at(1, 255), 1);
  const auto z = load_text_chunks(bytes_of("z a"), 3);
  EXPECT_EQ(z.values, (std::vector<std::int32_t>{25, 26, 0}));
  EXPECT_EQ(text_symbol(26), ' ');
  EXPECT_EQ(text_symbol(3), 'd');
}

TEST(Text, RemainderIsDropped) {
  const auto d = load_text_chunks(bytes_of(repeat_ab(300)));
  EXPECT_EQ(d.items, 1u);
  EXPECT_EQ(d.values.size(), 256u);
}

TEST(Text, IllegalByteNamesOffset) {
  std::string s = repeat_ab(100);
  s[37] = 'A';
  try {
    load_text_chunks(bytes_of(s));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Data);
    EXPECT_NE(std::string(e.what()).find("37"), std::string::npos) << e.what();
  }
}

TEST(Text, FileLoaderMatchesBytes) {
  const auto path = temp_file("text.txt");
  {
    std::ofstream out(path, std::ios::binary);
    out << repeat_ab(600);
  }
  EXPECT_EQ(load_text_file(path, 128).values, load_text_chunks(bytes_of(repeat_ab(600)), 128).values);
  std::filesystem::remove(path);
  EXPECT_EQ(kind_of([&] { load_text_file(path); }), ErrorKind::Io);
}

TEST(Tokens, PackingAndErrors) {
  std::vector<std::int32_t> toks(256);
  for (std::size_t k = 0; k < toks.size(); ++k) toks[k] = static_cast<std::int32_t>(k * 31 % 8192);
  const auto d = load_token_sequences(toks, 128, 8192);
  EXPECT_EQ(d.items, 2u);
  EXPECT_EQ(d.at(1, 0), toks[128]);
  toks[5] = 8192;
  EXPECT_EQ(kind_of([&] { load_token_sequences(toks, 128, 8192); }), ErrorKind::Data);
  const auto empty = load_token_sequences({}, 128, 8192);
  EXPECT_EQ(empty.items, 0u);
  EXPECT_NO_THROW(empty.check());
}

TEST(Tokens, LittleEndianFile) {
  const auto path = temp_file("tokens.bin");
  {
    std::ofstream out(path, std::ios::binary);
    for (std::uint32_t v : {1u, 258u, 7u, 65536u}) {
      for (int b = 0; b < 4; ++b) out.put(static_cast<char>((v >> (8 * b)) & 0xff));
    }
  }
  const auto d = load_token_file(path, 2, 70000);
  EXPECT_EQ(d.values, (std::vector<std::int32_t>{1, 258, 7, 65536}));
  {
    std::ofstream out(path, std::ios::binary);
  }
  EXPECT_EQ(load_token_file(path, 2, 10).items, 0u);
  std::filesystem::remove(path);
}

TEST(YCoCgR, Examples) {
  EXPECT_EQ(ycocg_r_forward(128, 128, 128), (YCoCg{128, 0, 0}));
  EXPECT_EQ(ycocg_r_forward(0, 0, 0), (YCoCg{0, 0, 0}));
  EXPECT_EQ(ycocg_r_forward(255, 0, 0), (YCoCg{63, 255, -127}));
  EXPECT_EQ(ycocg_r_inverse(128, 0, 0), (Rgb{128, 128, 128}));
  EXPECT_EQ(ycocg_r_inverse(63, 255, -127), (Rgb{255, 0, 0}));
}

TEST(YCoCgR, FloorNotTruncation) {
  // Co = -1: floor(-1/2) = -1, truncation would give 0.
  const auto c = ycocg_r_forward(0, 0, 1);
  EXPECT_EQ(c.co, -1);
  EXPECT_EQ(ycocg_r_inverse(c.y, c.co, c.cg), (Rgb{0, 0, 1}));
}

TEST(YCoCgR, RoundTripAndRanges) {
  Rng rng(81);
  int ymin = 1000, ymax = -1000, comin = 1000, comax = -1000, cgmin = 1000, cgmax = -1000;
  for (int k = 0; k < 100000; ++k) {
    const int r = static_cast<int>(rng.below(256)), g = static_cast<int>(rng.below(256)),
              b = static_cast<int>(rng.below(256));
    const auto c = ycocg_r_forward(r, g, b);
    ASSERT_EQ(ycocg_r_inverse(c.y, c.co, c.cg), (Rgb{r, g, b}));
    ASSERT_EQ(ycocg_r_forward(r, g, b), c);
    ymin = std::min(ymin, c.y), ymax = std::max(ymax, c.y);
    comin = std::min(comin, c.co), comax = std::max(comax, c.co);
    cgmin = std::min(cgmin, c.cg), cgmax = std::max(cgmax, c.cg);
  }
  EXPECT_GE(ymin, 0);
  EXPECT_LE(ymax, 255);
  EXPECT_GE(comin, -255);
  EXPECT_LE(comax, 255);
  EXPECT_GE(cgmin, -255);
  EXPECT_LE(cgmax, 255);
  EXPECT_LT(cgmin, 0);
}

TEST(YCoCgR, CornerExtremes) {
  for (int r : {0, 255})
    for (int g : {0, 255})
      for (int b : {0, 255}) {
        const auto c = ycocg_r_forward(r, g, b);
        EXPECT_EQ(ycocg_r_inverse(c.y, c.co, c.cg), (Rgb{r, g, b}));
      }
  EXPECT_EQ(ycocg_r_forward(0, 255, 0).cg, 255);
  EXPECT_EQ(ycocg_r_forward(255, 0, 255).cg, -255);
}

TEST(YCoCgR, InvalidInputsAreFlagged) {
  EXPECT_EQ(kind_of([] { ycocg_r_forward(256, 0, 0); }), ErrorKind::Domain);
  EXPECT_EQ(kind_of([] { ycocg_r_forward(0, -1, 0); }), ErrorKind::Domain);
  EXPECT_EQ(kind_of([] { ycocg_r_inverse(0, 0, 300); }), ErrorKind::Domain);
  EXPECT_EQ(kind_of([] { ycocg_r_inverse(255, 255, 255); }), ErrorKind::Domain);
}

TEST(YCoCgLossy, Examples) {
  const auto black = ycocg_lossy_forward(0, 0, 0);
  EXPECT_EQ(std::tie(black.yq, black.coq, black.cgq), std::make_tuple(255, 128, 128));
  EXPECT_DOUBLE_EQ(black.y, 1.0);
  const auto white = ycocg_lossy_forward(255, 255, 255);
  EXPECT_DOUBLE_EQ(white.y, 3.0);
  EXPECT_TRUE(white.clamped);
  EXPECT_EQ(std::tie(white.yq, white.coq, white.cgq), std::make_tuple(255, 128, 128));
  const auto red = ycocg_lossy_forward(255, 0, 0);
  EXPECT_EQ(std::tie(red.yq, red.coq, red.cgq), std::make_tuple(255, 255, 64));
  EXPECT_TRUE(red.clamped);
  EXPECT_EQ(kind_of([] { ycocg_lossy_forward(0, 0, 999); }), ErrorKind::Domain);
}

TEST(Patches, CountsAndLayout) {
  EXPECT_EQ(extract_patches(random_images(1, 32, 32, 1)).items, 16u);
  EXPECT_EQ(extract_patches(random_images(1, 32, 32, 1)).variables, 192u);
  EXPECT_EQ(extract_patches(random_images(1, 64, 64, 1)).items, 64u);
  const auto img = random_images(1, 8, 8, 2);
  const auto one = extract_patches(img);
  ASSERT_EQ(one.items, 1u);
  for (std::size_t k = 0; k < 192; ++k) EXPECT_EQ(one.values[k], img.pixels[k]);
  EXPECT_EQ(one.vocab, 256u);
}

TEST(Patches, SecondPatchOffsets) {
  const auto img = random_images(1, 16, 16, 3);
  const auto d = extract_patches(img);
  // Patch 1 is the top-right tile; variable (y, x, c) = (y * 8 + x) * 3 + c.
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x)
      for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(d.at(1, (y * 8 + x) * 3 + c), img.at(0, y, 8 + x, c));
}

TEST(Patches, PartitionReassembles) {
  for (auto t : {ColorTransform::Rgb, ColorTransform::LosslessYCoCg}) {
    const auto imgs = random_images(3, 32, 24, 4);
    const auto d = extract_patches(imgs, 8, t);
    EXPECT_NO_THROW(d.check());
    EXPECT_EQ(d.vocab, t == ColorTransform::Rgb ? 256u : kLosslessVocab);
    const auto back = assemble_patches(d, 32, 24, 8, t);
    EXPECT_EQ(back.pixels, imgs.pixels);
  }
}

TEST(Patches, LosslessChannelsAreShifted) {
  ImageSet img{1, 8, 8, std::vector<std::uint8_t>(192, 0)};
  img.pixels[0] = 255;  // red pixel at (0, 0)
  const auto d = extract_patches(img, 8, ColorTransform::LosslessYCoCg);
  EXPECT_EQ(d.at(0, 0), 63);
  EXPECT_EQ(d.at(0, 1), 255 + kChromaShift);
  EXPECT_EQ(d.at(0, 2), -127 + kChromaShift);
}

TEST(Patches, Errors) {
  EXPECT_EQ(kind_of([] { extract_patches(random_images(1, 12, 16, 1)); }), ErrorKind::Data);
  EXPECT_EQ(kind_of([] {
              assemble_patches(extract_patches(random_images(1, 8, 8, 1), 8, ColorTransform::LossyYCoCg), 8, 8, 8,
                               ColorTransform::LossyYCoCg);
            }),
            ErrorKind::Unsupported);
  EXPECT_EQ(parse_color_transform(to_string(ColorTransform::LossyYCoCg)), ColorTransform::LossyYCoCg);
  EXPECT_EQ(kind_of([] { parse_color_transform("hsv"); }), ErrorKind::Config);
}

TEST(Containers, ImageAndShardRoundTrip) {
  const auto imgs = random_images(2, 16, 8, 5);
  const auto ip = temp_file("imgs.bin");
  write_image_container(ip, imgs);
  const auto back = read_image_container(ip);
  EXPECT_EQ(back.count, 2u);
  EXPECT_EQ(back.height, 16u);
  EXPECT_EQ(back.width, 8u);
  EXPECT_EQ(back.pixels, imgs.pixels);

  const auto shard = extract_patches(imgs, 8, ColorTransform::LosslessYCoCg);
  const auto sp = temp_file("shard.bin");
  write_shard(sp, shard);
  const auto s2 = read_shard(sp);
  EXPECT_EQ(s2.values, shard.values);
  EXPECT_EQ(s2.vocab, shard.vocab);
  EXPECT_EQ(s2.items, shard.items);

  {
    std::ofstream out(ip, std::ios::binary);
    out << "not a container\n";
  }
  EXPECT_EQ(kind_of([&] { read_image_container(ip); }), ErrorKind::Data);
  std::filesystem::remove(ip);
  std::filesystem::remove(sp);
}

TEST(Shard, CheckSubsetSlice) {
  DatasetShard d{3, 2, 4, {0, 1, 2, 3, 1, 1}, "unit"};
  EXPECT_NO_THROW(d.check());
  const std::vector<std::size_t> rows{2, 0};
  EXPECT_EQ(d.subset(rows).values, (std::vector<std::int32_t>{1, 1, 0, 1}));
  EXPECT_EQ(d.slice(1, 3).values, (std::vector<std::int32_t>{2, 3, 1, 1}));
  d.values[3] = 4;
  EXPECT_EQ(kind_of([&] { d.check(); }), ErrorKind::Data);
  d.values.pop_back();
  EXPECT_EQ(kind_of([&] { d.check(); }), ErrorKind::Data);
}
