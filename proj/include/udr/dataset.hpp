#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "udr/io.hpp"
#include "udr/phantom.hpp"
#include "udr/selfsup.hpp"

namespace udr::data {

namespace fs = std::filesystem;

struct SimulateConfig {
  std::size_t h = 32, w = 32;
  std::size_t coils = 1;
  double accel = 4.0;
  std::size_t slices = 8;
  std::size_t contrasts = 1;
  std::uint64_t seed = 0;
  std::uint32_t first_variant = 0;  // phantom variant of slice 0; slice k uses first_variant + k
};

struct SliceInfo {
  std::string name;
  std::size_t contrast = 0;
  std::uint32_t variant = 0;
};

struct Manifest {
  std::size_t h = 0, w = 0, coils = 0, contrasts = 1;
  double accel = 1.0;
  std::uint64_t seed = 0;
  std::vector<SliceInfo> slices;
};

inline std::string slice_name(std::size_t k) {
  std::ostringstream s;
  s << "slice_" << std::setw(3) << std::setfill('0') << k;
  return s.str();
}

/// Independent per-slice seeds for the mask and the coil maps.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t slice, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(slice), stream};
  std::mt19937_64 rng(seq);
  return rng();
}

inline void write_manifest(const fs::path& dir, const Manifest& m) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "udr-dataset 1\n";
  out << "size " << m.h << " " << m.w << "\n";
  out << "coils " << m.coils << "\n";
  out << "accel " << m.accel << "\n";
  out << "contrasts " << m.contrasts << "\n";
  out << "seed " << m.seed << "\n";
  out << "slices " << m.slices.size() << "\n";
  for (const auto& s : m.slices) out << s.name << " " << s.contrast << " " << s.variant << "\n";
  io::detail::write_file(dir / "manifest.txt", out.str());
}

inline Manifest read_manifest(const fs::path& dir) {
  const fs::path p = dir / "manifest.txt";
  if (!fs::exists(p)) throw ConfigError("no dataset manifest at '" + p.string() + "'");
  std::istringstream in(io::detail::read_file(p));
  Manifest m;
  std::string key, tag;
  std::size_t version = 0, n = 0;
  in >> tag >> version;
  if (tag != "udr-dataset" || version != 1) throw ConfigError("'" + p.string() + "' is not a dataset manifest");
  in >> key >> m.h >> m.w;
  in >> key >> m.coils;
  in >> key >> m.accel;
  in >> key >> m.contrasts;
  in >> key >> m.seed;
  in >> key >> n;
  if (!in || key != "slices") throw ConfigError("malformed dataset manifest '" + p.string() + "'");
  for (std::size_t k = 0; k < n; ++k) {
    SliceInfo s;
    if (!(in >> s.name >> s.contrast >> s.variant)) throw ConfigError("manifest lists fewer slices than declared");
    if (s.contrast >= m.contrasts) throw ConfigError("slice " + s.name + " has contrast index out of range");
    m.slices.push_back(s);
  }
  return m;
}

/// Phantom, coils, Gaussian mask and undersampled k-space per slice, one directory each.
inline Manifest simulate(const SimulateConfig& cfg, const fs::path& out) {
  if (cfg.slices < 1) throw ConfigError("need at least one slice");
  if (cfg.contrasts < 1) throw ConfigError("need at least one contrast");
  if (cfg.coils < 1) throw ConfigError("need at least one coil");
  Manifest m{cfg.h, cfg.w, cfg.coils, cfg.contrasts, cfg.accel, cfg.seed, {}};
  fs::create_directories(out);
  for (std::size_t k = 0; k < cfg.slices; ++k) {
    SliceInfo s{slice_name(k), k % cfg.contrasts, cfg.first_variant + static_cast<std::uint32_t>(k)};
    const ComplexImage truth = shepp_logan(cfg.h, cfg.w, s.variant);
    const CoilMaps coils = synth_coils(cfg.h, cfg.w, cfg.coils, derive_seed(cfg.seed, k, 1));
    const SamplingMask mask = gen_gaussian_mask(cfg.h, cfg.w, cfg.accel, derive_seed(cfg.seed, k, 2));
    const CoilStack y = encode(truth, coils, mask);
    const fs::path dir = out / s.name;
    fs::create_directories(dir);
    io::save_image(dir / "truth.mrk", truth);
    io::save_coils(dir / "coils.mrk", coils);
    io::save_mask(dir / "mask.mrk", mask);
    io::save_stack(dir / "kspace.mrk", y, io::Kind::kspace);
    m.slices.push_back(s);
  }
  write_manifest(out, m);
  return m;
}

struct Slice {
  SliceInfo info;
  Acquisition acq;
};

inline std::vector<Slice> load(const fs::path& dir, Manifest* manifest = nullptr) {
  const Manifest m = read_manifest(dir);
  std::vector<Slice> out;
  for (const auto& s : m.slices) {
    const fs::path d = dir / s.name;
    Acquisition a{io::load_stack(d / "kspace.mrk"), io::load_mask(d / "mask.mrk"), io::load_coils(d / "coils.mrk"),
                  ConditioningLabel::make(m.accel, s.contrast, m.contrasts)};
    if (a.y.size() != a.coils.n_coils()) throw DimensionError(s.name + ": k-space and coil counts differ");
    if (a.mask.h != a.coils.height() || a.mask.w != a.coils.width())
      throw DimensionError(s.name + ": mask and coil extents differ");
    out.push_back({s, std::move(a)});
  }
  if (manifest) *manifest = m;
  return out;
}

}  // namespace udr::data
