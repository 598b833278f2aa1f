#include <CLI11.hpp>
#include <fmt/core.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mol/certify.hpp"
#include "mol/dataset.hpp"
#include "mol/errors.hpp"
#include "mol/io.hpp"
#include "mol/kernels.hpp"
#include "mol/metrics.hpp"
#include "mol/random.hpp"
#include "mol/robustness.hpp"
#include "mol/training.hpp"

namespace fs = std::filesystem;
using namespace mol;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitCertificate = 4;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> kappa;
  std::optional<double> alpha;
  std::optional<int> threads;
  std::string out;
};

void add_common(CLI::App* app, Common& c, bool config_required) {
  auto* opt = app->add_option("--config", c.config, "Experiment config (YAML or JSON)");
  if (config_required) opt->required();
  app->add_option("--seed", c.seed, "Override the config seed");
  app->add_option("--kappa", c.kappa, "Override the forward termination tolerance");
  app->add_option("--alpha", c.alpha, "Override the damping step");
  app->add_option("--threads", c.threads, "Sample-level worker threads");
  app->add_option("--out", c.out, "Output directory (default: config output)");
}

struct Loaded {
  std::string text;
  ExperimentConfig cfg;
};

Loaded resolve_config(const Common& c, const std::string* embedded) {
  Loaded l;
  if (!c.config.empty()) {
    try {
      l.text = read_file(c.config);
    } catch (const std::runtime_error& e) {
      throw ConfigError(e.what());
    }
  } else if (embedded) {
    l.text = *embedded;
  } else {
    throw ConfigError("--config is required");
  }
  l.cfg = parse_config(l.text);
  if (c.seed) {
    l.cfg.seed = *c.seed;
    l.cfg.train.seed = *c.seed;
  }
  if (c.kappa) {
    if (!(*c.kappa > 0.0)) throw ConfigError("--kappa must be > 0");
    l.cfg.mol().kappa = *c.kappa;
  }
  if (c.alpha) {
    if (!(*c.alpha >= 0.0)) throw ConfigError("--alpha must be >= 0");
    l.cfg.mol().alpha = *c.alpha;
  }
  if (c.threads) {
    if (*c.threads < 1) throw ConfigError("--threads must be >= 1");
    l.cfg.threads = *c.threads;
    l.cfg.train.threads = *c.threads;
  }
  if (!c.out.empty()) l.cfg.output = c.out;
  return l;
}

std::string num(double v) { return fmt::format("{:.17g}", v); }

struct Data {
  std::vector<Sample> train, val;
};

Data build_data(const ExperimentConfig& cfg) {
  auto all = make_dataset(cfg.dataset_config());
  Data d;
  d.train.assign(all.begin(), all.begin() + cfg.train_count);
  d.val.assign(all.begin() + cfg.train_count, all.end());
  return d;
}

const Sample& probe_sample(const Data& d) {
  if (!d.val.empty()) return d.val.front();
  if (!d.train.empty()) return d.train.front();
  throw ConfigError("dataset is empty; set dataset.train or dataset.val");
}

int cmd_make_dataset(const Common& c) {
  const auto l = resolve_config(c, nullptr);
  const std::string tag = config_hash(l.cfg);
  const fs::path dir = fs::path(l.cfg.output) / "dataset";
  const auto data = make_dataset(l.cfg.dataset_config());
  if (data.empty()) {
    fmt::print("no samples requested\n");
    return kExitOk;
  }
  const auto& spec = data.front().spec;
  if (!spec.mask.empty()) write_array(dir / "mask.bin", spec.mask, spec.image_shape, tag);
  for (std::size_t i = 0; i < spec.coil_maps.size(); ++i) {
    write_array(dir / fmt::format("coil_{:02d}.bin", i), spec.coil_maps[i], tag);
  }
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::string split = int(i) < l.cfg.train_count ? "train" : "val";
    const std::string stem = fmt::format("{}_{:04d}", split, i);
    write_array(dir / (stem + "_x.bin"), data[i].x_gt, tag);
    write_array(dir / (stem + "_b.bin"), data[i].b, tag);
    write_pgm(dir / (stem + "_x.pgm"), data[i].x_gt, tag);
    rows.push_back({std::to_string(i), split, stem + "_x.bin", stem + "_b.bin"});
  }
  write_csv(dir / "manifest.csv", tag, {"index", "split", "image", "measurement"}, rows);
  fmt::print("wrote {} samples to {}\n", data.size(), dir.string());
  return kExitOk;
}

int cmd_train(const Common& c) {
  const auto l = resolve_config(c, nullptr);
  const auto& cfg = l.cfg;
  const std::string tag = config_hash(cfg);
  const fs::path dir = cfg.output;
  const Data data = build_data(cfg);
  if (data.train.empty()) throw ConfigError("dataset.train must be >= 1 for training");
  TrainState state = init_train_state(cfg.net, data.train.front().x_gt.shape(), cfg.train);

  const auto init = validate_sense_init(data.val, cfg.train);
  const std::vector<std::string> header{"epoch",   "train_loss", "barrier",  "val_psnr", "val_ssim",
                                        "mean_nfe", "max_nfe",   "lip_p",    "lip_scale", "lip_bound",
                                        "beta",    "lambda",     "skipped",  "backward_capped", "val_failures"};
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"0", "", "", num(init.psnr), num(init.ssim), "", "", "", "", "", "", num(cfg.mol().lambda), "",
                  "", std::to_string(init.failures)});
  bool diverged = false;
  train(state, data.train, data.val, cfg.train, [&](const EpochRecord& r) {
    rows.push_back({std::to_string(r.epoch), num(r.train_loss), num(r.barrier), num(r.val_psnr), num(r.val_ssim),
                    num(r.mean_nfe), std::to_string(r.max_nfe), num(r.lip_p), num(std::sqrt(r.lip_p)),
                    num(r.lip_bound), num(r.beta), num(r.lambda), std::to_string(r.skipped),
                    std::to_string(r.backward_capped), std::to_string(r.val_failures)});
    fmt::print("epoch {:4d}  loss {:.5g}  val_psnr {:.3f}  nfe {:.1f}  P {:.4g}  lambda {:.4g}  skipped {}\n",
               r.epoch, r.train_loss, r.val_psnr, r.mean_nfe, r.lip_p, r.lambda, r.skipped);
    std::fflush(stdout);
    write_csv(dir / "metrics.csv", tag, header, rows);
    if (cfg.checkpoint_every > 0 && r.epoch % cfg.checkpoint_every == 0) {
      save_checkpoint(dir / fmt::format("checkpoint_{:04d}.bin", r.epoch), make_checkpoint(state, cfg, l.text));
    }
    diverged = diverged || r.skipped == int(data.train.size());
  });
  write_csv(dir / "metrics.csv", tag, header, rows);
  save_checkpoint(dir / "checkpoint.bin", make_checkpoint(state, cfg, l.text));
  return diverged ? kExitDivergence : kExitOk;
}

struct Restored {
  Loaded loaded;
  TrainState state;
};

Restored restore(const Common& c, const std::string& checkpoint) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  Restored r;
  r.loaded = resolve_config(c, &ckpt.config_text);
  r.state = restore_state(ckpt);
  r.loaded.cfg.mol().lambda = r.state.lambda;
  return r;
}

int cmd_reconstruct(const Common& c, const std::string& checkpoint, const std::string& input) {
  const auto r = restore(c, checkpoint);
  const auto& cfg = r.loaded.cfg;
  const std::string tag = config_hash(cfg);
  const fs::path dir = cfg.output;
  const OperatorSpec spec = make_operator(cfg.op, cfg.image_size, cfg.seed);
  ComplexImage b;
  std::optional<ComplexImage> truth;
  if (!input.empty()) {
    b = read_complex_array(input);
  } else {
    const Data data = build_data(cfg);
    b = probe_sample(data).b;
    truth = probe_sample(data).x_gt;
  }
  if (b.shape() != spec.measurement_shape()) {
    throw ShapeError("measurement shape " + shape_string(b.shape()) + " does not match the operator's " +
                     shape_string(spec.measurement_shape()));
  }
  const auto fwd = forward_deq(r.state.net, spec, cfg.mol(), b);
  write_array(dir / "x_star.bin", fwd.x_star, tag);
  write_pgm(dir / "x_star.pgm", fwd.x_star, tag);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t n = 0; n < fwd.residual_trace.size(); ++n) {
    rows.push_back({std::to_string(n + 1), num(fwd.residual_trace[n])});
  }
  write_csv(dir / "trace.csv", tag, {"iteration", "relative_change"}, rows);
  fmt::print("nfe {}  converged {}", fwd.nfe, fwd.converged ? "yes" : "no");
  if (truth && fwd.converged) fmt::print("  psnr {:.3f}", psnr(fwd.x_star, *truth));
  fmt::print("\n");
  return fwd.converged ? kExitOk : kExitDivergence;
}

int cmd_certify(const Common& c, const std::string& checkpoint, bool strict) {
  const auto r = restore(c, checkpoint);
  const auto& cfg = r.loaded.cfg;
  const std::string tag = config_hash(cfg);
  const fs::path dir = cfg.output;
  const Data data = build_data(cfg);
  const Sample& s = probe_sample(data);
  CertifyOptions opt;
  opt.pairs = cfg.certify_pairs;
  opt.starts = cfg.certify_starts;
  opt.kappa = cfg.certify_kappa;
  opt.max_iter = cfg.certify_max_iter;
  opt.epsilons = cfg.epsilons;
  opt.gaussian_trials = cfg.perturb_trials;
  opt.attack_steps = cfg.attack_steps;
  opt.seed = derive_seed(cfg.seed, 0xce47);
  opt.approximate = cfg.train.regime == Regime::kLR;
  const auto rep = certify(r.state.net, s.spec, cfg.mol(), s.b, opt);

  nlohmann::json j;
  j["config_hash"] = tag;
  j["alpha"] = rep.alpha;
  j["alpha_max"] = rep.alpha_max;
  j["m"] = rep.m;
  j["lambda"] = rep.lambda;
  j["mu_min"] = rep.mu_min;
  j["lipschitz_T"] = std::isfinite(rep.lipschitz_T) ? nlohmann::json(rep.lipschitz_T) : nlohmann::json(nullptr);
  j["approximate"] = rep.approximate;
  j["all_passed"] = rep.all_passed();
  std::vector<std::vector<std::string>> rows;
  for (const auto& it : rep.items) {
    j["certificates"].push_back({{"name", it.name},
                                 {"passed", it.passed},
                                 {"measured", std::isfinite(it.measured) ? nlohmann::json(it.measured) : nullptr},
                                 {"threshold", it.threshold},
                                 {"margin", std::isfinite(it.margin) ? nlohmann::json(it.margin) : nullptr},
                                 {"detail", it.detail}});
    rows.push_back({it.name, it.passed ? "pass" : "fail", num(it.measured), num(it.threshold), num(it.margin)});
    fmt::print("{:<22} {}  measured {:.6g}  threshold {:.6g}  margin {:.3g}\n", it.name,
               it.passed ? "PASS" : "FAIL", it.measured, it.threshold, it.margin);
  }
  fmt::print("alpha {:.6g}  alpha_max {:.6g}  L[T] {:.8g}{}\n", rep.alpha, rep.alpha_max, rep.lipschitz_T,
             rep.approximate ? "  (approximate: Lipschitz bound estimated, not enforced)" : "");
  write_file(dir / "certificate.json", j.dump(2) + "\n");
  write_csv(dir / "certificate.csv", tag, {"property", "result", "measured", "threshold", "margin"}, rows);
  return strict && !rep.all_passed() ? kExitCertificate : kExitOk;
}

int cmd_perturb(const Common& c, const std::string& checkpoint, const std::string& mode,
                const std::vector<double>& eps_override) {
  const auto r = restore(c, checkpoint);
  auto cfg = r.loaded.cfg;
  if (!eps_override.empty()) cfg.epsilons = eps_override;
  const std::string tag = config_hash(cfg);
  const fs::path dir = cfg.output;
  const Data data = build_data(cfg);
  const Sample& s = probe_sample(data);
  const bool adv = mode == "adversarial" || mode == "both";
  const bool gauss = mode == "gaussian" || mode == "both";
  std::vector<std::vector<std::string>> rows;
  auto row = [&](const std::string& kind, int trial, const PerturbationReport& p) {
    rows.push_back({kind, num(p.epsilon), std::to_string(trial), num(p.delta_in_norm), num(p.delta_out_norm),
                    num(p.amplification), num(p.theory_bound), num(p.psnr_clean), num(p.psnr_perturbed),
                    p.stable ? "1" : "0"});
  };
  bool unstable = false;
  for (std::size_t e = 0; e < cfg.epsilons.size(); ++e) {
    const double eps = cfg.epsilons[e];
    if (adv) {
      AttackOptions ao;
      ao.steps = cfg.attack_steps;
      ao.seed = derive_seed(cfg.seed, 300 + e);
      const auto p = adversarial_perturb(r.state.net, s.spec, cfg.mol(), s.b, eps, ao, &s.x_gt);
      row("adversarial", 0, p);
      unstable = unstable || !p.stable;
      if (p.stable) {
        const auto x = forward_deq_from(r.state.net, s.spec, cfg.mol(), s.b + p.gamma, s.x_gt).x_star;
        write_pgm(dir / fmt::format("adversarial_eps{:.3f}.pgm", eps), x, tag);
      }
      fmt::print("adversarial eps {:.3f}  amplification {:.6g}  bound {:.6g}\n", eps, p.amplification,
                 p.theory_bound);
    }
    if (gauss) {
      const auto reps = gaussian_perturb(r.state.net, s.spec, cfg.mol(), s.b, eps, cfg.perturb_trials,
                                         derive_seed(cfg.seed, 400 + e), &s.x_gt);
      double worst = 0.0;
      for (std::size_t t = 0; t < reps.size(); ++t) {
        row("gaussian", int(t), reps[t]);
        worst = std::max(worst, reps[t].amplification);
        unstable = unstable || !reps[t].stable;
      }
      fmt::print("gaussian    eps {:.3f}  max amplification {:.6g}\n", eps, worst);
    }
  }
  write_csv(dir / "perturb.csv", tag,
            {"mode", "epsilon", "trial", "delta_in", "delta_out", "amplification", "theory_bound", "psnr_clean",
             "psnr_perturbed", "stable"},
            rows);
  return unstable ? kExitDivergence : kExitOk;
}

int cmd_bench(const Common& c, int repeats) {
  ExperimentConfig cfg;
  if (!c.config.empty()) cfg = resolve_config(c, nullptr).cfg;
  const fs::path dir = c.out.empty() ? fs::path(cfg.output) : fs::path(c.out);
  const std::string tag = config_hash(cfg);
  kernels::ConvGeometry g{cfg.net.hidden, cfg.net.hidden, int(cfg.image_size), int(cfg.image_size),
                          cfg.net.kernel};
  Rng rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> w(g.weight_size()), in(g.input_size()), out(g.output_size()), gw(g.weight_size()),
      gb(std::size_t(g.out_channels)), gi(g.input_size());
  for (auto* v : {&w, &in}) {
    for (double& e : *v) e = normal(rng);
  }
  std::vector<std::vector<std::string>> rows;
  const auto previous = kernels::active_isa();
  for (auto isa : {kernels::Isa::kReference, kernels::Isa::kScalar, kernels::Isa::kAvx2}) {
    if (!kernels::isa_supported(isa)) continue;
    kernels::set_active_isa(isa);
    auto time = [&](auto&& fn) {
      const auto t0 = std::chrono::steady_clock::now();
      for (int r = 0; r < repeats; ++r) fn();
      return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() / repeats;
    };
    const double f = time([&] { kernels::conv2d_forward(g, w, {}, in, out); });
    const double bi = time([&] { kernels::conv2d_backward_input(g, w, out, gi); });
    const double bw = time([&] { kernels::conv2d_backward_weights(g, in, out, gw, gb); });
    rows.push_back({std::string(kernels::isa_name(isa)), num(f), num(bi), num(bw)});
    fmt::print("{:<10} forward {:8.3f} ms  backward_input {:8.3f} ms  backward_weights {:8.3f} ms\n",
               kernels::isa_name(isa), f, bi, bw);
  }
  kernels::set_active_isa(previous);
  write_csv(dir / "bench.csv", tag, {"isa", "forward_ms", "backward_input_ms", "backward_weights_ms"}, rows);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monotone operator learning: training, reconstruction and certification"};
  app.require_subcommand(1);

  Common common;
  std::string checkpoint, input, mode = "both";
  std::vector<double> eps;
  bool strict = false;
  int repeats = 20;

  auto* make = app.add_subcommand("make-dataset", "Generate phantoms, operator and measurements");
  add_common(make, common, true);
  auto* tr = app.add_subcommand("train", "Train the denoiser inside the equilibrium solver");
  add_common(tr, common, true);
  auto* rec = app.add_subcommand("reconstruct", "Solve for the fixed point of one measurement");
  add_common(rec, common, false);
  rec->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  rec->add_option("--input", input, "Measurement array (default: first validation sample)");
  auto* cert = app.add_subcommand("certify", "Check contraction, uniqueness, convergence and robustness");
  add_common(cert, common, false);
  cert->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  cert->add_flag("--strict", strict, "Exit 4 when any certificate fails");
  auto* pert = app.add_subcommand("perturb", "Adversarial and Gaussian measurement perturbations");
  add_common(pert, common, false);
  pert->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  pert->add_option("--mode", mode, "adversarial, gaussian or both")
      ->check(CLI::IsMember({"adversarial", "gaussian", "both"}));
  pert->add_option("--eps", eps, "Perturbation budgets as fractions of ||b||");
  auto* bench = app.add_subcommand("bench", "Time the convolution kernels per instruction set");
  add_common(bench, common, false);
  bench->add_option("--repeats", repeats, "Timed repetitions")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (make->parsed()) return cmd_make_dataset(common);
    if (tr->parsed()) return cmd_train(common);
    if (rec->parsed()) return cmd_reconstruct(common, checkpoint, input);
    if (cert->parsed()) return cmd_certify(common, checkpoint, strict);
    if (pert->parsed()) return cmd_perturb(common, checkpoint, mode, eps);
    if (bench->parsed()) return cmd_bench(common, repeats);
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitFailure;
  }
  return kExitFailure;
}
