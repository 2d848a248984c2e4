// udr: simulate, train, reconstruct, evaluate.
//
// Exit codes: 0 success, 2 usage or configuration, 3 numerical or checkpoint failure.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "udr/udr.hpp"

namespace fs = std::filesystem;
using namespace udr;

namespace {

constexpr int kUsage = 2;
constexpr int kFailure = 3;

struct SimulateArgs {
  std::vector<std::size_t> size{32, 32};
  std::size_t coils = 1, slices = 8, contrasts = 1;
  double accel = 4.0;
  std::uint64_t seed = 0;
  std::uint32_t first_variant = 0;
  std::string out;
};

struct TrainArgs {
  std::string data, out, resume;
  long steps = 200, ckpt_every = 0;
  std::size_t blocks = 4, channels = 32, tokens = 16;
  double lr = 0.002, rho = 0.05;
  int T = 1000;
  std::uint64_t seed = 0;
};

struct ReconArgs {
  std::string ckpt, input, out, conditioning = "next";
  int steps = 5;
  std::uint64_t seed = 0;
  bool no_noise = false;
};

struct EvalArgs {
  std::string recon, data, out;
};

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

io::Checkpoint read_checkpoint(const fs::path& p, const DenoiserConfig* expected = nullptr) {
  try {
    return expected ? io::load_checkpoint(p, *expected) : io::load_checkpoint(p);
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("cannot read checkpoint: ") + e.what());
  }
}

std::vector<data::Slice> read_dataset(const fs::path& dir, data::Manifest* m = nullptr) {
  if (!fs::is_directory(dir)) throw ConfigError("dataset directory '" + dir.string() + "' does not exist");
  return data::load(dir, m);
}

int cmd_simulate(const SimulateArgs& a, bool dump) {
  data::SimulateConfig cfg{a.size[0], a.size[1], a.coils, a.accel, a.slices, a.contrasts, a.seed, a.first_variant};
  if (dump) {
    std::cout << "command=simulate\nsize=" << cfg.h << "," << cfg.w << "\ncoils=" << cfg.coils
              << "\naccel=" << fmt(cfg.accel) << "\nslices=" << cfg.slices << "\ncontrasts=" << cfg.contrasts
              << "\nseed=" << cfg.seed << "\nfirst_variant=" << cfg.first_variant << "\nout=" << a.out << "\n";
    return 0;
  }
  const auto m = data::simulate(cfg, a.out);
  std::cout << "wrote " << m.slices.size() << " slices to " << a.out << "\n";
  return 0;
}

int cmd_train(const TrainArgs& a, bool dump) {
  TrainConfig cfg;
  cfg.model = {a.blocks, a.channels, a.tokens, 1};
  cfg.steps = a.steps;
  cfg.adam.lr = a.lr;
  cfg.rho = a.rho;
  cfg.T = a.T;
  cfg.seed = a.seed;
  cfg.ckpt_every = a.ckpt_every;
  cfg.out_dir = a.out;
  if (dump) {
    std::cout << "command=train\ndata=" << a.data << "\nsteps=" << cfg.steps << "\nblocks=" << a.blocks
              << "\nchannels=" << a.channels << "\ntokens=" << a.tokens << "\nckpt_every=" << cfg.ckpt_every
              << "\nlr=" << fmt(cfg.adam.lr) << "\nrho=" << fmt(cfg.rho) << "\nT=" << cfg.T << "\nseed=" << cfg.seed
              << "\nresume=" << a.resume << "\nout=" << a.out << "\n";
    return 0;
  }
  data::Manifest m;
  auto slices = read_dataset(a.data, &m);
  cfg.model.contrasts = m.contrasts;
  std::vector<Acquisition> dataset;
  for (auto& s : slices) dataset.push_back(std::move(s.acq));

  std::optional<io::Checkpoint> resume;
  if (!a.resume.empty()) {
    resume = read_checkpoint(a.resume, &cfg.model);
    auto it = resume->meta.find("seed");
    if (it != resume->meta.end() && it->second != std::to_string(cfg.seed))
      throw ConfigError("resume checkpoint was trained with --seed " + it->second);
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = train_loop(dataset, cfg, resume);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "trained to step " << r.step << " (" << r.trace.size() << " steps, " << std::fixed
            << std::setprecision(2) << secs << " s)";
  if (!r.trace.empty()) std::cout << ", final loss " << std::setprecision(6) << r.trace.back();
  std::cout << "\n";
  return 0;
}

int cmd_reconstruct(const ReconArgs& a, bool dump) {
  SamplerConfig sc;
  sc.steps = a.steps;
  sc.inject_noise = !a.no_noise;
  sc.conditioning = a.conditioning == "current" ? ConditioningNoise::current_step : ConditioningNoise::next_step;
  if (dump) {
    std::cout << "command=reconstruct\nckpt=" << a.ckpt << "\ninput=" << a.input << "\nsteps=" << sc.steps
              << "\nseed=" << a.seed << "\nconditioning=" << a.conditioning << "\nnoise=" << (sc.inject_noise ? 1 : 0)
              << "\nout=" << a.out << "\n";
    return 0;
  }
  auto slices = read_dataset(a.input);
  const io::Checkpoint ck = read_checkpoint(a.ckpt);
  int T = 1000;
  if (auto it = ck.meta.find("T"); it != ck.meta.end()) T = std::stoi(it->second);
  const NoiseSchedule sched = build_schedule(T);
  fs::create_directories(a.out);
  for (std::size_t k = 0; k < slices.size(); ++k) {
    const auto& s = slices[k];
    sc.seed = data::derive_seed(a.seed, k, 3);
    const auto t0 = std::chrono::steady_clock::now();
    const auto rec = reconstruct(s.acq.y, s.acq.mask, s.acq.coils, ck.params, sched, s.acq.label, sc);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    io::save_image(fs::path(a.out) / (s.info.name + ".mrk"), rec.image);
    std::cout << s.info.name << "\t" << std::fixed << std::setprecision(4) << secs << " s\n";
  }
  return 0;
}

struct Scores {
  double psnr, ssim, zf_psnr, zf_ssim;
};

int cmd_evaluate(const EvalArgs& a, bool dump) {
  if (dump) {
    std::cout << "command=evaluate\nrecon=" << a.recon << "\ndata=" << a.data << "\nout=" << a.out << "\n";
    return 0;
  }
  auto slices = read_dataset(a.data);
  if (!fs::is_directory(a.recon)) throw ConfigError("reconstruction directory '" + a.recon + "' does not exist");
  std::size_t found = 0;
  for (const auto& e : fs::directory_iterator(a.recon))
    if (e.path().extension() == ".mrk") ++found;
  if (found != slices.size())
    throw ConfigError("slice count mismatch: " + std::to_string(found) + " reconstructions for " +
                      std::to_string(slices.size()) + " dataset slices");

  std::ostringstream rep;
  rep << "slice\tpsnr\tssim\tzf_psnr\tzf_ssim\n";
  Scores mean{0, 0, 0, 0};
  for (const auto& s : slices) {
    const fs::path rp = fs::path(a.recon) / (s.info.name + ".mrk");
    if (!fs::exists(rp)) throw ConfigError("missing reconstruction for " + s.info.name);
    const auto truth = RealImage::magnitude_of(io::load_image(fs::path(a.data) / s.info.name / "truth.mrk"));
    const auto rec = RealImage::magnitude_of(io::load_image(rp));
    const auto zf = RealImage::magnitude_of(zero_filled(s.acq.y, s.acq.coils, s.acq.mask));
    const Scores sc{psnr(rec, truth), ssim(rec, truth), psnr(zf, truth), ssim(zf, truth)};
    rep << s.info.name << "\t" << fmt(sc.psnr) << "\t" << fmt(sc.ssim) << "\t" << fmt(sc.zf_psnr) << "\t"
        << fmt(sc.zf_ssim) << "\n";
    const double n = static_cast<double>(slices.size());
    mean.psnr += sc.psnr / n;
    mean.ssim += sc.ssim / n;
    mean.zf_psnr += sc.zf_psnr / n;
    mean.zf_ssim += sc.zf_ssim / n;
  }
  rep << "mean\t" << fmt(mean.psnr) << "\t" << fmt(mean.ssim) << "\t" << fmt(mean.zf_psnr) << "\t"
      << fmt(mean.zf_ssim) << "\n";
  std::cout << rep.str();
  if (!a.out.empty()) io::detail::write_file(a.out, rep.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unrolled diffusion reconstruction of undersampled MRI"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  bool dump = false;

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Write a synthetic phantom dataset");
  s->add_option("--size", sim.size, "H,W")->delimiter(',')->expected(2)->check(CLI::PositiveNumber);
  s->add_option("--coils", sim.coils)->check(CLI::PositiveNumber);
  s->add_option("--accel", sim.accel)->check(CLI::Range(1.0, 1e6));
  s->add_option("--slices", sim.slices)->check(CLI::PositiveNumber);
  s->add_option("--contrasts", sim.contrasts)->check(CLI::PositiveNumber);
  s->add_option("--seed", sim.seed);
  s->add_option("--first-variant", sim.first_variant, "Phantom variant of the first slice");
  s->add_option("--out", sim.out)->required();
  s->add_flag("--dump-config", dump);

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Self-supervised training");
  t->add_option("--data", tr.data)->required();
  t->add_option("--steps", tr.steps)->check(CLI::NonNegativeNumber);
  t->add_option("--blocks", tr.blocks)->check(CLI::PositiveNumber);
  t->add_option("--channels", tr.channels)->check(CLI::PositiveNumber);
  t->add_option("--tokens", tr.tokens)->check(CLI::PositiveNumber);
  t->add_option("--ckpt-every", tr.ckpt_every)->check(CLI::NonNegativeNumber);
  t->add_option("--lr", tr.lr)->check(CLI::NonNegativeNumber);
  t->add_option("--rho", tr.rho)->check(CLI::Range(0.0, 1.0));
  t->add_option("--timesteps", tr.T)->check(CLI::PositiveNumber);
  t->add_option("--seed", tr.seed);
  t->add_option("--resume", tr.resume, "Checkpoint to continue from");
  t->add_option("--out", tr.out)->required();
  t->add_flag("--dump-config", dump);

  ReconArgs rc;
  auto* r = app.add_subcommand("reconstruct", "Few-step conditional sampling");
  r->add_option("--ckpt", rc.ckpt)->required();
  r->add_option("--input", rc.input)->required();
  r->add_option("--steps", rc.steps)->check(CLI::PositiveNumber);
  r->add_option("--seed", rc.seed);
  r->add_option("--conditioning", rc.conditioning, "Noise level of the conditioning k-space")
      ->check(CLI::IsMember({"next", "current"}));
  r->add_flag("--no-noise", rc.no_noise, "Skip the sigma z injection between steps");
  r->add_option("--out", rc.out)->required();
  r->add_flag("--dump-config", dump);

  EvalArgs ev;
  auto* e = app.add_subcommand("evaluate", "PSNR/SSIM against ground truth and zero-filled");
  e->add_option("--recon", ev.recon)->required();
  e->add_option("--data", ev.data)->required();
  e->add_option("--out", ev.out, "Also write the report here");
  e->add_flag("--dump-config", dump);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err) == 0 ? 0 : kUsage;
  }

  try {
    if (s->parsed()) return cmd_simulate(sim, dump);
    if (t->parsed()) return cmd_train(tr, dump);
    if (r->parsed()) return cmd_reconstruct(rc, dump);
    return cmd_evaluate(ev, dump);
  } catch (const NumericalError& err) {
    std::cerr << "error: " << err.what() << " (step " << err.step() << ")\n";
    return kFailure;
  } catch (const CheckpointError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kFailure;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kUsage;
  }
}
