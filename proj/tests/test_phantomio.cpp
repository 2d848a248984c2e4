#include <gtest/gtest.h>
#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "oracles.hpp"
#include "udr/io.hpp"
#include "udr/phantom.hpp"

using namespace udr;
namespace fs = std::filesystem;

namespace {

fs::path tmp(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("udr_phantomio_" + std::to_string(getpid()));
  fs::create_directories(dir);
  return dir / name;
}

std::string bytes_of(const fs::path& p) { return io::detail::read_file(p); }

void write_bytes(const fs::path& p, const std::string& b) { io::detail::write_file(p, b); }

// float-representable values so the 32-bit container roundtrips exactly
ComplexImage representable(std::size_t h, std::size_t w, std::uint64_t seed) {
  // rounded through a float buffer; an in-place double-float-double cast gets folded away at -O3
  auto x = oracle::random_image(h, w, seed);
  std::vector<float> f(2 * x.size());
  for (std::size_t i = 0; i < x.size(); ++i) f[2 * i] = static_cast<float>(x[i].real()), f[2 * i + 1] = static_cast<float>(x[i].imag());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = cplx(f[2 * i], f[2 * i + 1]);
  return x;
}

}  // namespace

TEST(Phantom, RangeAndCorners) {
  auto p = shepp_logan(32, 40);
  double mx = 0.0;
  for (auto v : p.values()) {
    EXPECT_GE(v.real(), 0.0);
    EXPECT_LE(v.real(), 1.0);
    EXPECT_EQ(v.imag(), 0.0);
    mx = std::max(mx, v.real());
  }
  EXPECT_EQ(mx, 1.0);
  EXPECT_EQ(p(0, 0), cplx(0.0));
  EXPECT_EQ(p(31, 39), cplx(0.0));
  EXPECT_EQ(p(0, 39), cplx(0.0));
  EXPECT_EQ(p(31, 0), cplx(0.0));
  EXPECT_THROW(shepp_logan(15, 32), ConfigError);
}

TEST(Phantom, VariantsShareSupport) {
  auto a = shepp_logan(64, 64, 0), b = shepp_logan(64, 64, 1);
  EXPECT_FALSE(a == b);
  // outer skull ellipse decides the support
  for (std::size_t r = 0; r < 64; ++r)
    for (std::size_t c = 0; c < 64; ++c) {
      const double x = -1.0 + (2.0 * c + 1.0) / 64.0, y = 1.0 - (2.0 * r + 1.0) / 64.0;
      const bool inside = x * x / (0.69 * 0.69) + y * y / (0.92 * 0.92) <= 1.0;
      if (!inside) {
        EXPECT_EQ(a(r, c), cplx(0.0));
        EXPECT_EQ(b(r, c), cplx(0.0));
      }
    }
}

TEST(Phantom, MatchesEllipseMembershipOracle) {
  // Modified Shepp-Logan: intensity, semi-axes a b, center x0 y0, rotation in degrees.
  const double table[10][6] = {
      {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},         {-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0},
      {-0.2, 0.11, 0.31, 0.22, 0.0, -18.0},     {-0.2, 0.16, 0.41, -0.22, 0.0, 18.0},
      {0.1, 0.21, 0.25, 0.0, 0.35, 0.0},        {0.1, 0.046, 0.046, 0.0, 0.1, 0.0},
      {0.1, 0.046, 0.046, 0.0, -0.1, 0.0},      {0.1, 0.046, 0.023, -0.08, -0.605, 0.0},
      {0.1, 0.023, 0.023, 0.0, -0.606, 0.0},    {0.1, 0.023, 0.046, 0.06, -0.605, 0.0}};
  const std::size_t n = 64;
  std::vector<double> ref(n * n);
  double peak = 0.0;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      const double x = -1.0 + (2.0 * c + 1.0) / n, y = 1.0 - (2.0 * r + 1.0) / n;
      double s = 0.0;
      for (const auto& e : table) {
        const double t = e[5] * std::numbers::pi / 180.0;
        const double u = (x - e[3]) * std::cos(t) + (y - e[4]) * std::sin(t);
        const double v = -(x - e[3]) * std::sin(t) + (y - e[4]) * std::cos(t);
        if (u * u / (e[1] * e[1]) + v * v / (e[2] * e[2]) <= 1.0) s += e[0];
      }
      ref[r * n + c] = std::max(s, 0.0);
      peak = std::max(peak, ref[r * n + c]);
    }
  auto p = shepp_logan(n, n, 0);
  for (std::size_t i = 0; i < n * n; ++i) EXPECT_NEAR(p[i].real(), ref[i] / peak, 1e-12) << i;
}

TEST(Coils, SingleCoilIsOnes) {
  auto c = synth_coils(16, 16, 1, 3);
  ASSERT_EQ(c.n_coils(), 1u);
  for (auto v : c.maps[0].values()) EXPECT_EQ(v, cplx(1.0));
  EXPECT_THROW(synth_coils(16, 16, 0, 3), ConfigError);
}

TEST(Coils, NormalizedAndSmooth) {
  auto c = synth_coils(64, 64, 8, 5);
  EXPECT_LT(rss_deviation(c), 1e-9);
  double worst = 0.0;
  for (const auto& m : c.maps)
    for (std::size_t r = 0; r < 64; ++r)
      for (std::size_t k = 0; k < 64; ++k) {
        if (k + 1 < 64) worst = std::max(worst, std::abs(m(r, k + 1) - m(r, k)));
        if (r + 1 < 64) worst = std::max(worst, std::abs(m(r + 1, k) - m(r, k)));
      }
  EXPECT_LT(worst, 0.1);
}

TEST(Mrk1, ImageRoundtripBitExact) {
  auto x = representable(9, 7, 1);
  auto p = tmp("img.mrk");
  io::save_image(p, x);
  auto y = io::load_image(p);
  EXPECT_EQ(y, x);
  const auto b = bytes_of(p);
  EXPECT_EQ(b.substr(0, 4), std::string("\x4D\x52\x4B\x31", 4));
  EXPECT_EQ(b.size(), io::kHeaderBytes + 9 * 7 * 8);
  io::save_image(tmp("img2.mrk"), y);
  EXPECT_EQ(bytes_of(tmp("img2.mrk")), b);
}

TEST(Mrk1, LittleEndianHeader) {
  auto p = tmp("hdr.mrk");
  io::save_stack(p, {representable(3, 5, 1), representable(3, 5, 2)}, io::Kind::kspace);
  const auto b = bytes_of(p);
  const unsigned char expect[16] = {1, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0, 5, 0, 0, 0};
  for (int i = 0; i < 16; ++i) EXPECT_EQ(static_cast<unsigned char>(b[4 + i]), expect[i]);
  auto c = io::load(p);
  EXPECT_EQ(c.kind, io::Kind::kspace);
  EXPECT_EQ(c.stack.size(), 2u);
  EXPECT_EQ(c.stack[1].domain(), Domain::kspace);
}

TEST(Mrk1, StackMaskAndCoilsRoundtrip) {
  CoilStack s{representable(6, 6, 1), representable(6, 6, 2), representable(6, 6, 3)};
  io::save_stack(tmp("stack.mrk"), s, io::Kind::kspace);
  auto back = io::load_stack(tmp("stack.mrk"));
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(back[i].values().size(), s[i].values().size());
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < s[i].size(); ++k) EXPECT_EQ(back[i][k], s[i][k]);

  auto m = gen_gaussian_mask(16, 16, 4, 1);
  io::save_mask(tmp("mask.mrk"), m);
  EXPECT_EQ(io::load_mask(tmp("mask.mrk")), m);
  EXPECT_EQ(bytes_of(tmp("mask.mrk")).size(), io::kHeaderBytes + 256);

  CoilMaps c{{representable(6, 6, 5), representable(6, 6, 6)}};
  io::save_coils(tmp("coils.mrk"), c);
  auto cb = io::load_coils(tmp("coils.mrk"));
  EXPECT_EQ(cb.maps[1][7], c.maps[1][7]);
}

TEST(Mrk1, CorruptMagic) {
  auto p = tmp("bad.mrk");
  io::save_image(p, representable(4, 4, 1));
  auto b = bytes_of(p);
  b[0] = 'X';
  write_bytes(p, b);
  try {
    io::load(p);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
}

TEST(Mrk1, PayloadLengthMismatch) {
  auto p = tmp("trunc.mrk");
  io::save_image(p, representable(4, 4, 1));
  const auto b = bytes_of(p);
  write_bytes(p, b.substr(0, b.size() - 3));
  EXPECT_THROW(io::load(p), FormatError);
  write_bytes(p, b + "xx");
  EXPECT_THROW(io::load(p), FormatError);
  write_bytes(p, b.substr(0, 10));
  EXPECT_THROW(io::load(p), FormatError);
}

TEST(Mrk1, OversizedHeaderRejectedBeforeAllocation) {
  std::string b = "MRK1";
  for (std::uint32_t v : {1u, 0xFFFFFFFFu, 0xFFFFFFFFu, 0xFFFFFFFFu})
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  try {
    io::decode(b);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("1 GiB"), std::string::npos) << e.what();
  }
  std::string k = "MRK1";
  for (std::uint32_t v : {9u, 1u, 2u, 2u})
    for (int i = 0; i < 4; ++i) k.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  EXPECT_THROW(io::decode(k), FormatError);
}

TEST(Checkpoint, RoundtripBitExact) {
  DenoiserConfig cfg{2, 4, 3, 2};
  io::Checkpoint ck{init_denoiser(cfg, 7), {}, 42, {{"seed", "7"}}};
  ck.adam = AdamState::zeros_like(ck.params.tensors);
  ck.adam.step = 42;
  for (auto& [n, t] : ck.adam.m) t = oracle::random_tensor(t.shape(), n.size());
  for (auto& [n, t] : ck.adam.v) t = oracle::random_tensor(t.shape(), n.size() + 1, 1e-3);
  auto p = tmp("ck.udr");
  io::save_checkpoint(p, ck);
  auto back = io::load_checkpoint(p, cfg);
  EXPECT_EQ(back.params.config, cfg);
  EXPECT_EQ(back.params.tensors, ck.params.tensors);
  EXPECT_EQ(back.adam.m, ck.adam.m);
  EXPECT_EQ(back.adam.v, ck.adam.v);
  EXPECT_EQ(back.adam.step, 42);
  EXPECT_EQ(back.step, 42);
  EXPECT_EQ(back.meta.at("seed"), "7");
  io::save_checkpoint(tmp("ck2.udr"), back);
  EXPECT_EQ(bytes_of(tmp("ck2.udr")), bytes_of(p));
  EXPECT_EQ(io::load_checkpoint(p).params.config, cfg);
}

TEST(Checkpoint, MismatchedBlocksNamesOffenders) {
  DenoiserConfig small{1, 4, 2, 1}, big{2, 4, 2, 1};
  io::Checkpoint ck{init_denoiser(small, 1), AdamState::zeros_like(init_denoiser(small, 1).tensors), 0, {}};
  auto p = tmp("ck_small.udr");
  io::save_checkpoint(p, ck);
  try {
    io::load_checkpoint(p, big);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("block1."), std::string::npos) << e.what();
  }
  io::Checkpoint wide{init_denoiser({1, 5, 2, 1}, 1), {}, 0, {}};
  io::save_checkpoint(p, wide);
  EXPECT_THROW(io::load_checkpoint(p, small), CheckpointError);
}

TEST(Checkpoint, CorruptBlobRejected) {
  DenoiserConfig cfg{1, 4, 2, 1};
  io::Checkpoint ck{init_denoiser(cfg, 1), {}, 0, {}};
  auto p = tmp("ck_trunc.udr");
  io::save_checkpoint(p, ck);
  auto b = bytes_of(p);
  write_bytes(p, b.substr(0, b.size() - 8));
  EXPECT_THROW(io::load_checkpoint(p, cfg), FormatError);
}
