#pragma once

#include "udr/complex_image.hpp"
#include "udr/mask.hpp"

namespace udr {

inline void require_mask_extent(const ComplexImage& x, const SamplingMask& m, const char* op) {
  if (x.height() != m.h || x.width() != m.w) throw DimensionError(std::string(op) + ": mask extent mismatch");
}

inline void require_coil_extent(const ComplexImage& x, const CoilMaps& c, const char* op) {
  if (c.maps.empty()) throw DimensionError(std::string(op) + ": no coil maps");
  for (const auto& m : c.maps) require_same_extent(x, m, op);
}

/// Zeroes k-space positions outside the mask.
inline ComplexImage apply_mask(ComplexImage k, const SamplingMask& m) {
  require_mask_extent(k, m, "apply_mask");
  for (std::size_t i = 0; i < k.size(); ++i)
    if (!m[i]) k[i] = 0.0;
  return k;
}

inline ComplexImage coil_multiply(const ComplexImage& x, const ComplexImage& coil, bool conjugate = false) {
  require_same_extent(x, coil, "coil_multiply");
  ComplexImage out = x;
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (conjugate ? std::conj(coil[i]) : coil[i]) * x[i];
  return out;
}

/// Per-coil full k-space F(C_c x), no mask.
inline CoilStack coil_kspace(const ComplexImage& x, const CoilMaps& c) {
  require_coil_extent(x, c, "coil_kspace");
  CoilStack out;
  out.reserve(c.n_coils());
  for (const auto& map : c.maps) out.push_back(fft2c(coil_multiply(x, map)));
  return out;
}

/// Forward model: y_c = M . F(C_c I).
inline CoilStack encode(const ComplexImage& image, const CoilMaps& c, const SamplingMask& m) {
  require_mask_extent(image, m, "encode");
  CoilStack y = coil_kspace(image, c);
  for (auto& k : y) k = apply_mask(std::move(k), m);
  return y;
}

/// Adjoint of encode: sum_c conj(C_c) . F^-1(M . y_c).
inline ComplexImage zero_filled(const CoilStack& y, const CoilMaps& c, const SamplingMask& m) {
  if (y.size() != c.n_coils()) throw DimensionError("zero_filled: coil count mismatch");
  ComplexImage out(c.height(), c.width(), Domain::image);
  for (std::size_t k = 0; k < y.size(); ++k) {
    require_same_extent(y[k], c.maps[k], "zero_filled");
    const ComplexImage img = coil_multiply(ifft2c(apply_mask(y[k], m)), c.maps[k], true);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += img[i];
  }
  return out;
}

/// Replaces the masked k-space of each coil image C_c x with `y_ref[c]` and
/// recombines the coils with conj(C_c).
inline ComplexImage data_consistency_kspace(const ComplexImage& x, const CoilStack& y_ref, const CoilMaps& c,
                                            const SamplingMask& m) {
  require_coil_extent(x, c, "data_consistency");
  require_mask_extent(x, m, "data_consistency");
  if (y_ref.size() != c.n_coils()) throw DimensionError("data_consistency: reference coil count mismatch");
  ComplexImage out(x.height(), x.width(), Domain::image);
  for (std::size_t k = 0; k < c.n_coils(); ++k) {
    require_same_extent(x, y_ref[k], "data_consistency");
    ComplexImage ks = fft2c(coil_multiply(x, c.maps[k]));
    for (std::size_t i = 0; i < ks.size(); ++i)
      if (m[i]) ks[i] = y_ref[k][i];
    const ComplexImage img = coil_multiply(ifft2c(std::move(ks)), c.maps[k], true);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += img[i];
  }
  return out;
}

/// F^-1{F(C x)(1 - M) + F(C x_ref) M}, coil-combined.
inline ComplexImage data_consistency(const ComplexImage& x, const ComplexImage& x_ref, const CoilMaps& c,
                                     const SamplingMask& m) {
  require_same_extent(x, x_ref, "data_consistency");
  return data_consistency_kspace(x, coil_kspace(x_ref, c), c, m);
}

}  // namespace udr
