#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "udr/metrics.hpp"
#include "udr/phantom.hpp"
#include "udr/physics.hpp"

using namespace udr;

namespace {

cplx inner(const ComplexImage& a, const ComplexImage& b) {
  cplx s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
  return s;
}

cplx inner(const CoilStack& a, const CoilStack& b) {
  cplx s = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) s += inner(a[c], b[c]);
  return s;
}

SamplingMask random_mask(std::size_t h, std::size_t w, std::uint64_t seed, double p = 0.4) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution b(p);
  SamplingMask m(h, w, 0, MaskKind::main);
  for (auto& v : m.bits) v = b(rng) ? 1 : 0;
  return m;
}

CoilStack random_stack(std::size_t n, std::size_t h, std::size_t w, std::uint64_t seed, const SamplingMask& m) {
  CoilStack y;
  for (std::size_t c = 0; c < n; ++c) {
    auto k = oracle::random_image(h, w, seed + c);
    k.set_domain(Domain::kspace);
    y.push_back(apply_mask(k, m));
  }
  return y;
}

}  // namespace

TEST(Fft, ConstantImageConcentratesAtCenter) {
  ComplexImage x(4, 4);
  for (auto& v : x.values()) v = 1.0;
  auto k = fft2c(x);
  EXPECT_EQ(k.domain(), Domain::kspace);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(std::abs(k(r, c)), (r == 2 && c == 2) ? 4.0 : 0.0, 1e-12);
}

TEST(Fft, RoundtripAndUnitarity) {
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{8, 8}, {6, 10}, {5, 7}, {16, 2}}) {
    auto x = oracle::random_image(h, w, h * 31 + w);
    auto k = fft2c(x);
    EXPECT_NEAR(l2_norm(k), l2_norm(x), 1e-10);
    auto back = ifft2c(k);
    EXPECT_EQ(back.domain(), Domain::image);
    EXPECT_LT(max_abs_diff(back, x), 1e-10);
  }
}

TEST(Fft, MatchesDirectDft) {
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{16, 16}, {12, 6}, {9, 8}}) {
    auto x = oracle::random_image(h, w, 7 + h);
    EXPECT_LT(max_abs_diff(fft2c(x), oracle::dft2c(x, -1)), 1e-9);
    auto k = x;
    k.set_domain(Domain::kspace);
    EXPECT_LT(max_abs_diff(ifft2c(k), oracle::dft2c(k, +1)), 1e-9);
  }
}

TEST(Mask, FullAccelerationIsAllOnes) {
  auto m = gen_gaussian_mask(32, 24, 1.0, 5);
  EXPECT_EQ(m.count(), m.size());
}

TEST(Mask, ExactCountAndCalibration) {
  auto m = gen_gaussian_mask(64, 64, 4.0, 11);
  EXPECT_EQ(m.count(), 1024u);
  for (std::size_t r = 30; r < 34; ++r)
    for (std::size_t c = 30; c < 34; ++c) EXPECT_TRUE(m.at(r, c));
  for (double R : {2.0, 3.0, 6.0, 8.0}) {
    auto mr = gen_gaussian_mask(40, 36, R, 3);
    EXPECT_EQ(mr.count(), static_cast<std::size_t>(std::llround(40 * 36 / R)));
    EXPECT_NEAR(mr.fraction() * R, 1.0, 0.1);
  }
}

TEST(Mask, SeedDeterminism) {
  EXPECT_EQ(gen_gaussian_mask(32, 32, 4, 1), gen_gaussian_mask(32, 32, 4, 1));
  EXPECT_FALSE(gen_gaussian_mask(32, 32, 4, 1) == gen_gaussian_mask(32, 32, 4, 2));
}

TEST(Mask, TooAggressiveAccelerationRejected) {
  EXPECT_THROW(gen_gaussian_mask(16, 16, 20.0, 1), ConfigError);
  EXPECT_THROW(gen_gaussian_mask(16, 16, 0.5, 1), ConfigError);
}

TEST(Mask, DensityNonIncreasingWithRadius) {
  const std::size_t n = 64;
  std::vector<double> hits(8, 0.0), cells(8, 0.0);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto m = gen_gaussian_mask(n, n, 4.0, seed);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) {
        const double dr = static_cast<double>(r) - 32.0, dc = static_cast<double>(c) - 32.0;
        const auto bin = static_cast<std::size_t>(std::sqrt(dr * dr + dc * dc) / 4.0);
        if (bin >= hits.size()) continue;
        cells[bin] += 1;
        hits[bin] += m.at(r, c) ? 1 : 0;
      }
  }
  for (std::size_t b = 1; b < hits.size(); ++b) EXPECT_LE(hits[b] / cells[b], hits[b - 1] / cells[b - 1] + 1e-12) << b;
}

TEST(Encode, FullMaskSingleCoilIsFft) {
  auto I = oracle::random_image(8, 8, 1);
  auto y = encode(I, CoilMaps::unit(8, 8), SamplingMask(8, 8));
  ASSERT_EQ(y.size(), 1u);
  EXPECT_EQ(max_abs_diff(y[0], fft2c(I)), 0.0);
}

TEST(Encode, ZeroImageAndMaskedZeros) {
  auto C = synth_coils(16, 16, 3, 2);
  auto m = random_mask(16, 16, 3);
  for (const auto& k : encode(ComplexImage(16, 16), C, m))
    for (auto v : k.values()) EXPECT_EQ(v, cplx(0.0));
  auto y = encode(oracle::random_image(16, 16, 4), C, m);
  for (const auto& k : y)
    for (std::size_t i = 0; i < k.size(); ++i)
      if (!m[i]) EXPECT_EQ(k[i], cplx(0.0));
}

TEST(Encode, ShapeMismatchThrows) {
  EXPECT_THROW(encode(ComplexImage(8, 8), CoilMaps::unit(8, 6), SamplingMask(8, 8)), DimensionError);
  EXPECT_THROW(encode(ComplexImage(8, 8), CoilMaps::unit(8, 8), SamplingMask(6, 8)), DimensionError);
}

TEST(ZeroFilled, FullMaskInverts) {
  auto I = oracle::random_image(12, 12, 5);
  SamplingMask full(12, 12);
  auto C = CoilMaps::unit(12, 12);
  EXPECT_LT(max_abs_diff(zero_filled(encode(I, C, full), C, full), I), 1e-10);
  auto Cm = synth_coils(12, 12, 4, 6);
  EXPECT_LT(max_abs_diff(zero_filled(encode(I, Cm, full), Cm, full), I), 1e-10);
}

TEST(ZeroFilled, ZeroDataGivesZeroImage) {
  auto C = synth_coils(8, 8, 2, 1);
  SamplingMask m(8, 8);
  CoilStack y(2, ComplexImage(8, 8, Domain::kspace));
  const auto xu = zero_filled(y, C, m);
  for (auto v : xu.values()) EXPECT_EQ(v, cplx(0.0));
}

TEST(ZeroFilled, UndersampledPhantomLosesHighFrequencies) {
  auto I = shepp_logan(32, 32);
  auto C = CoilMaps::unit(32, 32);
  auto m = gen_gaussian_mask(32, 32, 4.0, 9);
  auto xu = zero_filled(encode(I, C, m), C, m);
  const double p = psnr(RealImage::magnitude_of(xu), RealImage::magnitude_of(I));
  EXPECT_TRUE(std::isfinite(p));
  // error energy in k-space sits outside the central quarter
  auto err = fft2c(xu);
  auto ref = fft2c(I);
  double inner_e = 0, outer_e = 0;
  for (std::size_t r = 0; r < 32; ++r)
    for (std::size_t c = 0; c < 32; ++c) {
      const double e = std::norm(err(r, c) - ref(r, c));
      (r >= 12 && r < 20 && c >= 12 && c < 20 ? inner_e : outer_e) += e;
    }
  EXPECT_GT(outer_e, 4 * inner_e);
}

TEST(Adjoint, SingleAndMultiCoil) {
  for (std::size_t nc : {1u, 4u}) {
    auto C = nc == 1 ? CoilMaps::unit(16, 12) : synth_coils(16, 12, nc, 7);
    auto m = random_mask(16, 12, 8);
    for (std::uint64_t s = 0; s < 5; ++s) {
      auto I = oracle::random_image(16, 12, 100 + s);
      auto y = random_stack(nc, 16, 12, 200 + s * 10, m);
      const cplx lhs = inner(encode(I, C, m), y);
      const cplx rhs = inner(I, zero_filled(y, C, m));
      EXPECT_LT(std::abs(lhs - rhs), 1e-9) << nc;
    }
  }
}

TEST(DataConsistency, ZeroMaskIsIdentity) {
  auto x = oracle::random_image(16, 16, 1), ref = oracle::random_image(16, 16, 2);
  SamplingMask none(16, 16, 0);
  EXPECT_LT(max_abs_diff(data_consistency(x, ref, CoilMaps::unit(16, 16), none), x), 1e-10);
  auto C = synth_coils(16, 16, 3, 4);
  EXPECT_LT(max_abs_diff(data_consistency(x, ref, C, none), x), 1e-10);
}

TEST(DataConsistency, FullMaskSingleCoilGivesReference) {
  auto x = oracle::random_image(16, 16, 1), ref = oracle::random_image(16, 16, 2);
  EXPECT_LT(max_abs_diff(data_consistency(x, ref, CoilMaps::unit(16, 16), SamplingMask(16, 16)), ref), 1e-10);
}

TEST(DataConsistency, IdempotentAndMatchesReferenceOnMask) {
  auto C = CoilMaps::unit(16, 16);
  for (std::uint64_t s = 0; s < 5; ++s) {
    auto x = oracle::random_image(16, 16, s), ref = oracle::random_image(16, 16, s + 50);
    auto m = random_mask(16, 16, s + 99);
    auto once = data_consistency(x, ref, C, m);
    auto twice = data_consistency(once, ref, C, m);
    EXPECT_LT(max_abs_diff(once, twice), 1e-10);
    auto ko = fft2c(once), kr = fft2c(ref), kx = fft2c(x);
    for (std::size_t i = 0; i < ko.size(); ++i) {
      if (m[i])
        EXPECT_LT(std::abs(ko[i] - kr[i]), 1e-10);
      else
        EXPECT_LT(std::abs(ko[i] - kx[i]), 1e-10);
    }
  }
}

TEST(DataConsistency, ShapeMismatchThrows) {
  EXPECT_THROW(data_consistency(ComplexImage(8, 8), ComplexImage(8, 6), CoilMaps::unit(8, 8), SamplingMask(8, 8)),
               DimensionError);
}

TEST(Coils, UnitRootSumOfSquares) {
  auto C = synth_coils(24, 20, 6, 3);
  EXPECT_LT(rss_deviation(C), 1e-9);
}
