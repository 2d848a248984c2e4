#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "udr/errors.hpp"
#include "udr/fft.hpp"

namespace udr {

using cplx = std::complex<double>;

enum class Domain : std::uint8_t { image, kspace };

/// h x w complex grid with a domain tag. std::complex stores re/im interleaved.
class ComplexImage {
 public:
  ComplexImage() = default;
  ComplexImage(std::size_t h, std::size_t w, Domain d = Domain::image)
      : h_(h), w_(w), domain_(d), values_(h * w, cplx{}) {
    if (h == 0 || w == 0) throw DimensionError("complex image extents must be positive");
  }
  ComplexImage(std::size_t h, std::size_t w, std::vector<cplx> values, Domain d = Domain::image)
      : h_(h), w_(w), domain_(d), values_(std::move(values)) {
    if (h == 0 || w == 0) throw DimensionError("complex image extents must be positive");
    if (values_.size() != h * w) throw DimensionError("complex image payload does not match h*w");
  }

  std::size_t height() const noexcept { return h_; }
  std::size_t width() const noexcept { return w_; }
  std::size_t size() const noexcept { return values_.size(); }
  Domain domain() const noexcept { return domain_; }
  void set_domain(Domain d) noexcept { domain_ = d; }

  cplx& operator()(std::size_t r, std::size_t c) { return values_[r * w_ + c]; }
  cplx operator()(std::size_t r, std::size_t c) const { return values_[r * w_ + c]; }
  cplx& operator[](std::size_t i) { return values_[i]; }
  cplx operator[](std::size_t i) const { return values_[i]; }

  std::span<cplx> values() noexcept { return values_; }
  std::span<const cplx> values() const noexcept { return values_; }

  bool same_extent(const ComplexImage& o) const noexcept { return h_ == o.h_ && w_ == o.w_; }

  friend bool operator==(const ComplexImage&, const ComplexImage&) = default;

 private:
  std::size_t h_ = 0;
  std::size_t w_ = 0;
  Domain domain_ = Domain::image;
  std::vector<cplx> values_;
};

inline void require_same_extent(const ComplexImage& a, const ComplexImage& b, const char* op) {
  if (!a.same_extent(b))
    throw DimensionError(std::string(op) + ": extent mismatch " + std::to_string(a.height()) + "x" +
                         std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                         std::to_string(b.width()));
}

/// Centered orthonormal 2D Fourier transform, image -> kspace.
inline ComplexImage fft2c(ComplexImage x) {
  fft::forward(x.values(), x.height(), x.width());
  x.set_domain(Domain::kspace);
  return x;
}

/// Inverse of fft2c, kspace -> image.
inline ComplexImage ifft2c(ComplexImage k) {
  fft::inverse(k.values(), k.height(), k.width());
  k.set_domain(Domain::image);
  return k;
}

inline double l2_norm(const ComplexImage& x) {
  double s = 0.0;
  for (auto v : x.values()) s += std::norm(v);
  return std::sqrt(s);
}

inline double max_abs_diff(const ComplexImage& a, const ComplexImage& b) {
  require_same_extent(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Complex modulus per pixel, row-major.
inline std::vector<double> magnitude(const ComplexImage& x) {
  std::vector<double> m(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) m[i] = std::abs(x[i]);
  return m;
}

/// Per-coil stack sharing one extent.
using CoilStack = std::vector<ComplexImage>;

/// Coil sensitivities, normalized to unit root-sum-of-squares per pixel.
struct CoilMaps {
  CoilStack maps;

  std::size_t n_coils() const noexcept { return maps.size(); }
  std::size_t height() const { return maps.at(0).height(); }
  std::size_t width() const { return maps.at(0).width(); }

  static CoilMaps unit(std::size_t h, std::size_t w) {
    ComplexImage ones(h, w);
    for (auto& v : ones.values()) v = 1.0;
    return CoilMaps{{std::move(ones)}};
  }
};

/// Largest deviation of the per-pixel root-sum-of-squares from 1.
inline double rss_deviation(const CoilMaps& c) {
  double worst = 0.0;
  for (std::size_t i = 0; i < c.maps.at(0).size(); ++i) {
    double s = 0.0;
    for (const auto& m : c.maps) s += std::norm(m[i]);
    worst = std::max(worst, std::abs(std::sqrt(s) - 1.0));
  }
  return worst;
}

}  // namespace udr
