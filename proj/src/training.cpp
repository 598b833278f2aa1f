#include "mol/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "mol/errors.hpp"
#include "mol/metrics.hpp"
#include "mol/parallel.hpp"

namespace mol {

std::string_view regime_name(Regime r) { return r == Regime::kLR ? "LR" : "SN"; }

Regime parse_regime(std::string_view name) {
  if (name == "LR" || name == "lr") return Regime::kLR;
  if (name == "SN" || name == "sn") return Regime::kSN;
  throw std::invalid_argument("unknown regime '" + std::string(name) + "' (expected LR or SN)");
}

void TrainConfig::validate() const {
  mol.validate();
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (!(lr_theta >= 0.0) || !(lr_lambda >= 0.0)) throw std::invalid_argument("learning rates must be >= 0");
  if (batch_size != 1) throw std::invalid_argument("batch_size must be 1 (per-sample updates)");
  if (beta0 < 0.0 || !(beta_decay > 0.0 && beta_decay <= 1.0)) throw std::invalid_argument("bad beta schedule");
  if (sn_target < 0.0 || sn_target >= 1.0) throw std::invalid_argument("sn_target must lie in [0, 1)");
  if (!(lambda_floor > 0.0)) throw std::invalid_argument("lambda_floor must be > 0");
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
}

void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamMoments& moments, double lr,
               long t) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  if (grads.size() != params.size()) throw ShapeError("adam_step: gradient and parameter sizes differ");
  if (t < 1) throw std::invalid_argument("adam_step: t counts from 1");
  if (moments.first.empty()) moments.first.assign(params.size(), 0.0);
  if (moments.second.empty()) moments.second.assign(params.size(), 0.0);
  if (moments.first.size() != params.size() || moments.second.size() != params.size()) {
    throw ShapeError("adam_step: moment sizes differ from parameters");
  }
  const double c1 = 1.0 - std::pow(b1, double(t));
  const double c2 = 1.0 - std::pow(b2, double(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    moments.first[i] = b1 * moments.first[i] + (1.0 - b1) * grads[i];
    moments.second[i] = b2 * moments.second[i] + (1.0 - b2) * grads[i] * grads[i];
    const double mh = moments.first[i] / c1;
    const double vh = moments.second[i] / c2;
    params[i] -= lr * mh / (std::sqrt(vh) + eps);
  }
}

TrainState init_train_state(const NetArchitecture& arch, const Shape& shape, const TrainConfig& cfg) {
  cfg.validate();
  TrainState s;
  s.rng.seed(cfg.seed);
  s.net = make_xavier_net(arch, derive_seed(cfg.seed, 0x6e6574));
  spectral_normalize(s.net, cfg.effective_sn_target(), shape);
  s.lambda = cfg.mol.lambda;
  return s;
}

namespace {

MolConfig solver_config(const TrainConfig& cfg, double lambda) {
  MolConfig m = cfg.mol;
  m.lambda = lambda;
  return m;
}

ValidationMetrics evaluate(const DenoiserNet* net, double lambda, const std::vector<Sample>& data,
                           const TrainConfig& cfg) {
  struct Row {
    bool ok = false;
    double psnr = 0.0, ssim = 0.0;
    int nfe = 0;
  };
  const MolConfig mc = solver_config(cfg, lambda);
  SolveOptions so;
  so.cg = mc.cg;
  std::vector<Row> rows(data.size());
  parallel_for(data.size(), cfg.threads, [&](std::size_t i) {
    const Sample& s = data[i];
    ComplexImage x;
    if (net) {
      auto fwd = forward_deq(*net, s.spec, mc, s.b);
      if (!fwd.converged) return;
      rows[i].nfe = fwd.nfe;
      x = std::move(fwd.x_star);
    } else {
      x = sense_init(s.spec, s.b, mc.lambda0, so);
    }
    rows[i].psnr = psnr(x, s.x_gt);
    rows[i].ssim = ssim(x, s.x_gt);
    rows[i].ok = true;
  });
  // Reduced in sample order so the sums do not depend on the thread count.
  ValidationMetrics out;
  double psum = 0.0, ssum = 0.0, nsum = 0.0;
  for (const auto& r : rows) {
    if (!r.ok) {
      ++out.failures;
      continue;
    }
    psum += r.psnr;
    ssum += r.ssim;
    nsum += r.nfe;
    ++out.count;
  }
  if (out.count > 0) {
    out.psnr = psum / out.count;
    out.ssim = ssum / out.count;
    out.mean_nfe = nsum / out.count;
  }
  return out;
}

}  // namespace

ValidationMetrics validate(const TrainState& state, const std::vector<Sample>& data, const TrainConfig& cfg) {
  return evaluate(&state.net, state.lambda, data, cfg);
}

ValidationMetrics validate_sense_init(const std::vector<Sample>& data, const TrainConfig& cfg) {
  return evaluate(nullptr, cfg.mol.lambda, data, cfg);
}

EpochRecord train_epoch(TrainState& state, const std::vector<Sample>& train, const std::vector<Sample>& val,
                        const TrainConfig& cfg) {
  cfg.validate();
  EpochRecord rec;
  rec.epoch = state.epoch + 1;
  rec.beta = cfg.effective_beta0() * std::pow(cfg.beta_decay, double(state.epoch));
  const double threshold = cfg.threshold() * cfg.threshold();
  const Shape shape = train.empty() ? Shape{} : train.front().x_gt.shape();

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (cfg.shuffle) std::shuffle(order.begin(), order.end(), state.rng);

  double loss_sum = 0.0, barrier_sum = 0.0, nfe_sum = 0.0;
  int accepted = 0, attempted = 0;
  for (std::size_t idx : order) {
    const Sample& s = train[idx];
    const MolConfig mc = solver_config(cfg, state.lambda);
    const std::uint64_t ascent_seed = state.rng();
    ++attempted;
    auto fwd = forward_deq(state.net, s.spec, mc, s.b);
    nfe_sum += fwd.nfe;
    rec.max_nfe = std::max(rec.max_nfe, fwd.nfe);
    if (!fwd.converged) {
      ++rec.skipped;
      continue;
    }
    const ComplexImage err = fwd.x_star - s.x_gt;
    auto grad = backward_deq(state.net, s.spec, mc, s.b, fwd.x_star, 2.0 * err);
    // A capped adjoint solve still gives a truncated Neumann-series gradient; only non-finite ones are dropped.
    if (!grad.converged) ++rec.backward_capped;
    if (!std::isfinite(grad.lambda) || !std::isfinite(grad.theta.norm())) {
      ++rec.skipped;
      continue;
    }
    double barrier = 0.0;
    if (cfg.regime == Regime::kLR) {
      AscentOptions ao = cfg.ascent;
      ao.seed = ascent_seed;
      const auto est = estimate_local_lipschitz(state.net, fwd.x_star, ao);
      rec.lip_p = std::max(rec.lip_p, est.value);
      auto rg = lipschitz_ratio_grad(state.net, fwd.x_star, est.eta_star);
      barrier = barrier_penalty(rg.value, threshold, rec.beta);
      grad.theta.axpy(barrier_derivative(rg.value, threshold, rec.beta), rg.theta);
    }

    std::vector<double> params = flatten_parameters(state.net);
    ++state.step;
    adam_step(params, grad.theta.flatten(), state.theta_moments, cfg.lr_theta, state.step);
    assign_parameters(state.net, params);
    std::vector<double> lam{state.lambda};
    adam_step(lam, {grad.lambda}, state.lambda_moments, cfg.lr_lambda, state.step);
    state.lambda = std::max(lam[0], cfg.lambda_floor);
    if (cfg.regime == Regime::kSN) spectral_normalize(state.net, cfg.effective_sn_target(), shape);

    loss_sum += norm_squared(err);
    barrier_sum += barrier;
    ++accepted;
  }

  if (accepted > 0) {
    rec.train_loss = loss_sum / accepted;
    rec.barrier = barrier_sum / accepted;
  }
  if (attempted > 0) rec.mean_nfe = nfe_sum / attempted;
  if (cfg.regime == Regime::kSN && !train.empty()) {
    // Measured P(x*) for the SN regime too, at the first sample.
    const Sample& s = train.front();
    auto fwd = forward_deq(state.net, s.spec, solver_config(cfg, state.lambda), s.b);
    AscentOptions ao = cfg.ascent;
    ao.seed = state.rng();
    rec.lip_p = estimate_local_lipschitz(state.net, fwd.x_star, ao).value;
  }
  if (!shape.empty()) rec.lip_bound = spectral_bound(state.net, shape);
  const auto vm = validate(state, val, cfg);
  rec.val_psnr = vm.psnr;
  rec.val_ssim = vm.ssim;
  rec.val_failures = vm.failures;
  rec.lambda = state.lambda;
  ++state.epoch;
  state.history.push_back(rec);
  return rec;
}

void train(TrainState& state, const std::vector<Sample>& train_set, const std::vector<Sample>& val,
           const TrainConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch) {
  for (int e = 0; e < cfg.epochs; ++e) {
    const EpochRecord rec = train_epoch(state, train_set, val, cfg);
    if (on_epoch) on_epoch(rec);
  }
}

}  // namespace mol
