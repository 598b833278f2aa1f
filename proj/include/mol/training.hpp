#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "mol/dataset.hpp"
#include "mol/denoiser.hpp"
#include "mol/lipschitz.hpp"
#include "mol/mol_solver.hpp"
#include "mol/random.hpp"

namespace mol {

enum class Regime { kLR, kSN };

std::string_view regime_name(Regime r);
Regime parse_regime(std::string_view name);

struct TrainConfig {
  Regime regime = Regime::kLR;
  int epochs = 1;
  double lr_theta = 1e-4;
  double lr_lambda = 1.0;
  int batch_size = 1;
  double beta0 = 0.0;       // 0 selects 1/m
  double beta_decay = 0.98;
  double sn_target = 0.0;   // 0 selects 1 - m
  double lambda_floor = 1e-3;
  bool shuffle = true;
  int threads = 1;          // sample-level fan-out in validation
  std::uint64_t seed = 0;
  AscentOptions ascent;
  MolConfig mol;            // alpha, m, kappa, iteration caps; lambda is the initial value

  double threshold() const { return 1.0 - mol.m; }
  double effective_beta0() const { return beta0 > 0.0 ? beta0 : 1.0 / mol.m; }
  double effective_sn_target() const { return sn_target > 0.0 ? sn_target : 1.0 - mol.m; }
  void validate() const;
};

struct AdamMoments {
  std::vector<double> first;
  std::vector<double> second;
};

// Bias-corrected Adam with beta1 = 0.9, beta2 = 0.999, eps = 1e-8. `t` counts from 1.
void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamMoments& moments, double lr,
               long t);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;   // mean ||x* - x_gt||^2 over accepted samples
  double barrier = 0.0;      // mean barrier term, LR only
  double val_psnr = 0.0;
  double val_ssim = 0.0;
  double mean_nfe = 0.0;     // forward iterations over training samples
  int max_nfe = 0;
  double lip_p = 0.0;        // largest measured P(x*) this epoch
  double lip_bound = 0.0;    // spectral-norm product after the epoch
  double beta = 0.0;
  double lambda = 0.0;
  int skipped = 0;          // samples without an update
  int backward_capped = 0;  // adjoint solves stopped at max_iter_backward
  int val_failures = 0;
};

struct TrainState {
  DenoiserNet net;
  double lambda = 1.0;
  AdamMoments theta_moments;
  AdamMoments lambda_moments;
  long step = 0;
  int epoch = 0;
  Rng rng;
  std::vector<EpochRecord> history;
};

// Fresh state: Xavier weights rescaled into the spectral ball of radius 1 - m so
// both regimes start where the Lipschitz constraint holds.
TrainState init_train_state(const NetArchitecture& arch, const Shape& shape, const TrainConfig& cfg);

struct ValidationMetrics {
  double psnr = 0.0;
  double ssim = 0.0;
  double mean_nfe = 0.0;
  int count = 0;
  int failures = 0;
};

ValidationMetrics validate(const TrainState& state, const std::vector<Sample>& data, const TrainConfig& cfg);
// Same metrics for the SENSE initialization alone.
ValidationMetrics validate_sense_init(const std::vector<Sample>& data, const TrainConfig& cfg);

// One pass over `train` with per-sample updates, then validation on `val`.
// Appends to and returns the new history entry.
EpochRecord train_epoch(TrainState& state, const std::vector<Sample>& train, const std::vector<Sample>& val,
                        const TrainConfig& cfg);

// cfg.epochs calls of train_epoch; `on_epoch` (optional) sees each record as it lands.
void train(TrainState& state, const std::vector<Sample>& train_set, const std::vector<Sample>& val,
           const TrainConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch = nullptr);

}  // namespace mol
