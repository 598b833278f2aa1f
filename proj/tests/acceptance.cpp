// Acceptance run: one PASS/FAIL line per criterion, metrics under --out.
//   mol_acceptance --out DIR [--only 1,2,...]
// Criterion 10 repeats 1-9 into DIR/rerun and compares the metrics files.

#include <fmt/core.h>

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mol/certify.hpp"
#include "mol/dataset.hpp"
#include "mol/io.hpp"
#include "mol/kernels.hpp"
#include "mol/lipschitz.hpp"
#include "mol/robustness.hpp"
#include "mol/training.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace mol;

namespace {

constexpr std::uint64_t kSeed = 2024;

std::string g_report;  // every printed line, also written to summary.txt

void report(const std::string& line) {
  fmt::print("{}\n", line);
  std::fflush(stdout);
  g_report += line + "\n";
}

struct Outcome {
  bool passed = true;
  std::string summary;
  std::vector<std::vector<std::string>> rows;  // name, value

  void check(bool ok) { passed = passed && ok; }
  void put(const std::string& name, double v) { rows.push_back({name, fmt::format("{:.17g}", v)}); }
};

std::string g6(double v) { return fmt::format("{:.6g}", v); }

// Certified configuration shared by criteria 2-4 and 7.
struct Certified {
  OperatorSpec spec;
  ComplexImage x_gt, b;
  DenoiserNet net;
  MolConfig cfg;
  double lt = 0.0;
};

Certified certified_setup() {
  DatasetConfig dc;
  dc.image_size = 32;
  dc.count = 1;
  dc.seed = kSeed;
  auto s = make_dataset(dc).front();
  Certified c;
  c.spec = s.spec;
  c.x_gt = s.x_gt;
  c.b = s.b;
  c.net = make_xavier_net({5, 16, 3}, derive_seed(kSeed, 1));
  spectral_normalize(c.net, 0.9, {32, 32});
  c.lt = lipschitz_T(c.cfg.m, c.cfg.alpha, c.cfg.lambda, c.spec.mu_min);
  return c;
}

Outcome criterion1() {
  Outcome o;
  const double a = alpha_max(0.1);
  // alpha_max is increasing in m; bisect for alpha_max(m) = 1.
  double lo = 1e-6, hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (alpha_max(mid) < 1.0 ? lo : hi) = mid;
  }
  const double m1 = 0.5 * (lo + hi);
  o.check(a >= 0.0554 && a <= 0.0555);
  o.check(std::round(m1 * 1e4) / 1e4 == 0.7639);
  o.check(std::abs(m1 - (3.0 - std::sqrt(5.0))) < 1e-12);
  o.put("alpha_max_m0.1", a);
  o.put("m_at_alpha_1", m1);
  o.summary = fmt::format("alpha_max(0.1)={:.6f} m(alpha=1)={:.6f}", a, m1);
  return o;
}

Outcome criterion2(const Certified& c) {
  Outcome o;
  const double ratio = max_contraction_ratio(c.net, c.spec, c.cfg, c.b, 100, derive_seed(kSeed, 2));
  o.check(ratio <= c.lt + 1e-6);
  o.put("max_ratio", ratio);
  o.put("lipschitz_T", c.lt);
  o.summary = fmt::format("max ratio {} <= L[T] {} + 1e-6", g6(ratio), g6(c.lt));
  return o;
}

MolConfig tight(MolConfig cfg) {
  cfg.kappa = 1e-8;
  cfg.max_iter_forward = 5000;
  return cfg;
}

Outcome criterion3(const Certified& c) {
  Outcome o;
  auto u = fixed_point_spread(c.net, c.spec, tight(c.cfg), c.b, 10, derive_seed(kSeed, 3));
  o.check(u.all_converged && u.max_relative_spread <= 1e-6);
  o.put("max_relative_spread", u.max_relative_spread);
  o.put("all_converged", u.all_converged);
  o.summary = fmt::format("spread {} over 10 starts (converged: {})", g6(u.max_relative_spread),
                          u.all_converged ? "all" : "not all");
  return o;
}

Outcome criterion4(const Certified& c) {
  Outcome o;
  auto fwd = forward_deq(c.net, c.spec, tight(c.cfg), c.b);
  const double slope = log_residual_slope(fwd.residual_trace, 20);
  o.check(fwd.converged && fwd.residual_trace.size() >= 20);
  o.check(slope <= std::log(c.lt) + 1e-3);
  o.put("nfe", fwd.nfe);
  o.put("slope", slope);
  o.put("log_lipschitz_T", std::log(c.lt));
  o.summary = fmt::format("slope {} <= log L[T] {} + 1e-3 (nFE {})", g6(slope), g6(std::log(c.lt)), fwd.nfe);
  return o;
}

Outcome criterion5(const Certified& c) {
  Outcome o;
  // F = I - H stays monotone but L[H] > 1, so the undamped update overshoots.
  const auto net = make_overshoot_net({5, 16, 3}, 1.5, 0.5, {32, 32}, derive_seed(kSeed, 5));
  MolConfig undamped = c.cfg, damped = c.cfg;
  undamped.alpha = 1.0;
  auto a1 = forward_deq(net, c.spec, undamped, c.b);
  auto a2 = forward_deq(net, c.spec, damped, c.b);
  o.check(!a1.converged && a2.converged);
  o.put("alpha1_converged", a1.converged);
  o.put("alpha1_nfe", a1.nfe);
  o.put("alpha1_last_change", a1.residual_trace.empty() ? 0.0 : a1.residual_trace.back());
  o.put("alpha0.055_converged", a2.converged);
  o.put("alpha0.055_nfe", a2.nfe);
  o.summary = fmt::format("alpha=1: {} after {} (last e {}); alpha=0.055: {} in {}",
                          a1.converged ? "converged" : "no convergence", a1.nfe,
                          g6(a1.residual_trace.empty() ? 0.0 : a1.residual_trace.back()),
                          a2.converged ? "converged" : "no convergence", a2.nfe);
  return o;
}

Outcome criterion6() {
  Outcome o;
  const std::size_t n = 8;
  DatasetConfig dc;
  dc.image_size = n;
  dc.count = 1;
  dc.seed = derive_seed(kSeed, 6);
  const auto s = make_dataset(dc).front();
  auto net = make_xavier_net({3, 8, 3}, derive_seed(kSeed, 7));
  Rng rng(derive_seed(kSeed, 8));
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  for (auto& l : net.layers) {
    for (double& b : l.bias) b = u(rng);
  }
  spectral_normalize(net, 0.9, {n, n});
  MolConfig cfg;
  cfg.kappa = 1e-10;
  cfg.max_iter_forward = 20000;
  cfg.max_iter_backward = 20000;
  bool all_converged = true;
  auto loss = [&](const DenoiserNet& nt) {
    auto f = forward_deq(nt, s.spec, cfg, s.b);
    all_converged = all_converged && f.converged;
    return norm_squared(f.x_star - s.x_gt);
  };
  auto fwd = forward_deq(net, s.spec, cfg, s.b);
  auto g = backward_deq(net, s.spec, cfg, s.b, fwd.x_star, 2.0 * (fwd.x_star - s.x_gt));
  const auto analytic = g.theta.flatten();
  const auto params = flatten_parameters(net);
  const double h = 1e-4;
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params;
    DenoiserNet probe = net;
    p[k] = params[k] + h;
    assign_parameters(probe, p);
    const double up = loss(probe);
    p[k] = params[k] - h;
    assign_parameters(probe, p);
    const double fd = (up - loss(probe)) / (2 * h);
    num += (fd - analytic[k]) * (fd - analytic[k]);
    den += fd * fd;
  }
  const double rel = std::sqrt(num / den);
  o.check(fwd.converged && g.converged && all_converged && rel < 1e-3);
  o.put("parameters", double(params.size()));
  o.put("relative_error", rel);
  o.put("gradient_norm", std::sqrt(den));
  o.put("backward_iterations", g.iterations);
  o.summary = fmt::format("relative error {} over {} parameters", g6(rel), params.size());
  return o;
}

Outcome criterion7(const Certified& c) {
  Outcome o;
  const double bound = robustness_bound(c.cfg.alpha, c.cfg.lambda, c.cfg.m, 0.0);
  double worst_adv = 0.0, worst_gauss = 0.0;
  bool stable = true;
  int e = 0;
  for (double eps : {0.05, 0.10, 0.15}) {
    AttackOptions ao;
    ao.steps = 50;
    ao.seed = derive_seed(kSeed, 70 + e);
    auto adv = adversarial_perturb(c.net, c.spec, c.cfg, c.b, eps, ao, &c.x_gt);
    stable = stable && adv.stable;
    worst_adv = std::max(worst_adv, adv.amplification);
    o.put(fmt::format("adversarial_eps{:.2f}", eps), adv.amplification);
    double wg = 0.0;
    for (const auto& r : gaussian_perturb(c.net, c.spec, c.cfg, c.b, eps, 50, derive_seed(kSeed, 80 + e), &c.x_gt)) {
      stable = stable && r.stable;
      wg = std::max(wg, r.amplification);
    }
    o.put(fmt::format("gaussian_max_eps{:.2f}", eps), wg);
    worst_gauss = std::max(worst_gauss, wg);
    ++e;
  }
  const double small = robustness_bound(1e-8, c.cfg.lambda, c.cfg.m, 0.0);
  const double limit = c.cfg.lambda / c.cfg.m;
  const double rel = std::abs(small - limit) / limit;
  o.check(stable && worst_adv <= bound && worst_gauss <= bound && rel < 1e-3);
  o.put("bound", bound);
  o.put("small_alpha_bound", small);
  o.summary = fmt::format("max amplification adv {} gauss {} <= bound {}; alpha->0 bound {} vs lambda/m {}",
                          g6(worst_adv), g6(worst_gauss), g6(bound), g6(small), g6(limit));
  return o;
}

Outcome criterion8() {
  Outcome o;
  // Prox: CG against the closed-form k-space division.
  const auto spec = make_masked_fourier({32, 32}, make_variable_density_mask(32, 32, 2.0, 0.08, kSeed));
  const auto rhs = random_complex({32, 32}, derive_seed(kSeed, 9));
  SolveOptions cg;
  cg.force_cg = true;
  cg.cg.tol = 1e-14;
  cg.cg.max_iter = 1000;
  const auto closed = solve_normal(spec, rhs, 0.055, {});
  const auto iter = solve_normal(spec, rhs, 0.055, cg);
  const double prox_err = norm(closed.x - iter.x) / norm(closed.x);
  o.put("prox_relative_difference", prox_err);

  // Conv layer forward and input VJP against dense matrices, every available ISA.
  const auto net = make_xavier_net({3, 4, 3}, derive_seed(kSeed, 10));
  double conv_err = 0.0;
  const auto saved = kernels::active_isa();
  for (auto isa : {kernels::Isa::kReference, kernels::Isa::kScalar, kernels::Isa::kAvx2}) {
    if (!kernels::isa_supported(isa)) continue;
    kernels::set_active_isa(isa);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      const auto& layer = net.layers[l];
      const kernels::ConvGeometry geo{layer.in_channels, layer.out_channels, 8, 8, layer.kernel};
      const Eigen::MatrixXd m = oracle::dense_conv(layer, 8, 8);
      Rng rng(derive_seed(kSeed, 11 + l));
      std::normal_distribution<double> nd;
      Eigen::VectorXd in(Eigen::Index(geo.input_size())), go(Eigen::Index(geo.output_size()));
      for (auto& v : in) v = nd(rng);
      for (auto& v : go) v = nd(rng);
      std::vector<double> out(geo.output_size()), gi(geo.input_size());
      const std::vector<double> zero_bias(std::size_t(layer.out_channels), 0.0);
      kernels::conv2d_forward(geo, layer.weights, zero_bias, {in.data(), geo.input_size()}, out);
      kernels::conv2d_backward_input(geo, layer.weights, {go.data(), geo.output_size()}, gi);
      const Eigen::VectorXd fo = m * in, bi = m.transpose() * go;
      for (Eigen::Index i = 0; i < fo.size(); ++i) conv_err = std::max(conv_err, std::abs(fo[i] - out[std::size_t(i)]));
      for (Eigen::Index i = 0; i < bi.size(); ++i) conv_err = std::max(conv_err, std::abs(bi[i] - gi[std::size_t(i)]));
    }
  }
  kernels::set_active_isa(saved);
  o.put("conv_max_abs_difference", conv_err);

  // Zero net: adversarial objective against the top singular value of the dense solution map.
  const std::size_t n = 8;
  const auto mf = make_masked_fourier({n, n}, make_variable_density_mask(n, n, 2.0, 0.08, derive_seed(kSeed, 12)));
  const auto x = make_phantom(n, n, derive_seed(kSeed, 14));
  const auto b = apply(mf, x);
  MolConfig cfg;
  cfg.kappa = 1e-11;
  cfg.max_iter_forward = 5000;
  cfg.max_iter_backward = 5000;
  const auto a = oracle::dense_complex([&](const ComplexImage& v) { return apply(mf, v); }, {n, n});
  const Eigen::Index dim = Eigen::Index(n * n);
  const Eigen::MatrixXcd sol =
      cfg.lambda * (Eigen::MatrixXcd::Identity(dim, dim) + cfg.lambda * a.adjoint() * a).inverse() * a.adjoint();
  const double sigma = Eigen::JacobiSVD<Eigen::MatrixXcd>(sol).singularValues()(0);
  const double eps = 0.05;
  AttackOptions ao;
  ao.seed = derive_seed(kSeed, 15);
  const auto adv = adversarial_perturb(make_zero_net({3, 4, 3}), mf, cfg, b, eps, ao);
  const double want = std::pow(sigma * eps * norm(b), 2);
  const double got = adv.delta_out_norm * adv.delta_out_norm;
  const double adv_err = std::abs(got - want) / want;
  o.put("adversarial_objective", got);
  o.put("svd_objective", want);

  o.check(closed.closed_form && iter.converged && prox_err <= 1e-8);
  o.check(conv_err <= 1e-10);
  o.check(adv_err <= 0.01);
  o.summary = fmt::format("prox {} conv {} adversarial objective rel. diff {}", g6(prox_err), g6(conv_err),
                          g6(adv_err));
  return o;
}

Outcome criterion9(const fs::path& dir) {
  Outcome o;
  DatasetConfig dc;
  dc.image_size = 32;
  dc.count = 24;
  dc.seed = 1;
  auto all = make_dataset(dc);
  std::vector<Sample> train_set(all.begin(), all.begin() + 20), val(all.begin() + 20, all.end());
  TrainConfig tc;
  tc.regime = Regime::kLR;
  tc.epochs = 200;
  tc.lr_theta = 3e-4;
  tc.lr_lambda = 1.0;
  tc.seed = 3;
  auto state = init_train_state({5, 8, 3}, {32, 32}, tc);
  const auto sense = validate_sense_init(val, tc);
  const double threshold = tc.threshold() * tc.threshold();
  std::vector<std::vector<std::string>> rows;
  bool nfe_ok = true, p_ok = true;
  int skipped = 0;
  train(state, train_set, val, tc, [&](const EpochRecord& r) {
    nfe_ok = nfe_ok && r.mean_nfe < 200.0;
    p_ok = p_ok && r.lip_p < threshold;
    skipped += r.skipped;
    rows.push_back({std::to_string(r.epoch), fmt::format("{:.17g}", r.train_loss), fmt::format("{:.17g}", r.barrier),
                    fmt::format("{:.17g}", r.val_psnr), fmt::format("{:.17g}", r.val_ssim),
                    fmt::format("{:.17g}", r.mean_nfe), std::to_string(r.max_nfe), fmt::format("{:.17g}", r.lip_p),
                    fmt::format("{:.17g}", r.lambda), std::to_string(r.skipped),
                    std::to_string(r.backward_capped)});
  });
  write_csv(dir / "c9_epochs.csv", "acceptance",
            {"epoch", "train_loss", "barrier", "val_psnr", "val_ssim", "mean_nfe", "max_nfe", "lip_p", "lambda",
             "skipped", "backward_capped"},
            rows);
  const double final_psnr = state.history.back().val_psnr;
  const double gain = final_psnr - sense.psnr;
  o.check(gain >= 3.0 && nfe_ok && p_ok);
  o.put("sense_psnr", sense.psnr);
  o.put("final_psnr", final_psnr);
  o.put("final_ssim", state.history.back().val_ssim);
  o.put("final_lambda", state.lambda);
  o.put("skipped_samples", skipped);
  double max_p = 0.0, max_nfe = 0.0;
  for (const auto& r : state.history) {
    max_p = std::max(max_p, r.lip_p);
    max_nfe = std::max(max_nfe, r.mean_nfe);
  }
  o.put("max_lip_p", max_p);
  o.put("max_mean_nfe", max_nfe);
  o.summary = fmt::format("PSNR {:.3f} vs SENSE {:.3f} (+{:.2f} dB), max mean nFE {:.1f}, max P {:.4f} < {:.4f}",
                          final_psnr, sense.psnr, gain, max_nfe, max_p, threshold);
  return o;
}

struct Criterion {
  int id;
  double limit_s;
  std::function<Outcome(const fs::path&)> run;
};

// Runs the selected criteria into `dir`; returns pass flags by id.
std::vector<std::pair<int, bool>> run_all(const fs::path& dir, const std::set<int>& only, bool print) {
  fs::create_directories(dir);
  std::optional<Certified> cert;
  auto certified = [&]() -> const Certified& {
    if (!cert) cert = certified_setup();
    return *cert;
  };
  const std::vector<Criterion> list = {
      {1, 1.0, [](const fs::path&) { return criterion1(); }},
      {2, 120.0, [&](const fs::path&) { return criterion2(certified()); }},
      {3, 300.0, [&](const fs::path&) { return criterion3(certified()); }},
      {4, 60.0, [&](const fs::path&) { return criterion4(certified()); }},
      {5, 120.0, [&](const fs::path&) { return criterion5(certified()); }},
      {6, 600.0, [](const fs::path&) { return criterion6(); }},
      {7, 900.0, [&](const fs::path&) { return criterion7(certified()); }},
      {8, 300.0, [](const fs::path&) { return criterion8(); }},
      {9, 7200.0, [](const fs::path& d) { return criterion9(d); }},
  };
  std::vector<std::pair<int, bool>> flags;
  for (const auto& c : list) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run(dir);
    } catch (const std::exception& e) {
      o.passed = false;
      o.summary = std::string("error: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool ok = o.passed && secs < c.limit_s;
    write_csv(dir / fmt::format("c{}.csv", c.id), "acceptance", {"metric", "value"}, o.rows);
    if (print) {
      report(fmt::format("criterion {:>2}: {}  {}  [{:.1f} s, limit {:.0f} s]", c.id, ok ? "PASS" : "FAIL",
                         o.summary, secs, c.limit_s));
    }
    flags.emplace_back(c.id, ok);
  }
  return flags;
}

}  // namespace

int main(int argc, char** argv) {
  fs::path out = "acceptance_out";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--out" && i + 1 < argc) {
      out = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string tok;
      while (std::getline(ss, tok, ',')) only.insert(std::stoi(tok));
    } else {
      fmt::print(stderr, "usage: mol_acceptance [--out DIR] [--only 1,2,...]\n");
      return 2;
    }
  }
  int failures = 0;
  std::set<int> first;
  for (auto [id, ok] : run_all(out / "run1", only, true)) {
    first.insert(id);
    failures += ok ? 0 : 1;
  }
  if (only.empty() || only.count(10)) {
    const auto t0 = std::chrono::steady_clock::now();
    std::set<int> rerun_ids = only;
    rerun_ids.erase(10);
    run_all(out / "run2", rerun_ids, false);
    std::vector<std::string> mismatched;
    std::size_t compared = 0;
    for (const auto& entry : fs::directory_iterator(out / "run1")) {
      const auto other = out / "run2" / entry.path().filename();
      ++compared;
      if (!fs::exists(other) || read_file(entry.path()) != read_file(other)) {
        mismatched.push_back(entry.path().filename().string());
      }
    }
    const bool ok = mismatched.empty() && compared > 0;
    std::string names;
    for (const auto& m : mismatched) names += " " + m;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report(fmt::format("criterion 10: {}  {} metrics files compared byte-for-byte, {} differ{}  [{:.1f} s]",
                       ok ? "PASS" : "FAIL", compared, mismatched.size(), names, secs));
    failures += ok ? 0 : 1;
  }
  report(fmt::format("{} criteria failed", failures));
  write_file(out / "summary.txt", g_report);
  return failures == 0 ? 0 : 1;
}
