#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mol/complex_image.hpp"
#include "mol/dataset.hpp"
#include "mol/denoiser.hpp"
#include "mol/mol_solver.hpp"
#include "mol/training.hpp"

namespace mol {

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::size_t image_size = 32;
  int threads = 1;
  std::string output = "out";

  int train_count = 20;
  int val_count = 4;
  double noise_sigma = 0.0;
  OperatorConfig op;
  NetArchitecture net;
  TrainConfig train;  // train.mol holds the solver settings

  std::vector<double> epsilons{0.05, 0.10, 0.15};
  int perturb_trials = 50;
  int attack_steps = 50;

  int certify_pairs = 100;
  int certify_starts = 10;
  double certify_kappa = 1e-8;
  int certify_max_iter = 5000;

  int checkpoint_every = 0;  // 0 keeps only the final checkpoint

  const MolConfig& mol() const { return train.mol; }
  MolConfig& mol() { return train.mol; }
  DatasetConfig dataset_config() const;
};

// Parses the YAML/JSON config text. Unknown keys, wrong types and out-of-range
// values raise ConfigError carrying the 1-based line of the offending node.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Sorted-key JSON of every field that can change a result (not threads or output).
std::string canonical_config(const ExperimentConfig& cfg);
// 16 hex digits of FNV-1a over canonical_config.
std::string config_hash(const ExperimentConfig& cfg);

// Array container: "MOLARRAY" magic, u32 version, u32 dtype (1 real f64, 2 complex f64),
// u32 rank, u64 extents, u32 tag length and tag bytes (config hash), then
// little-endian values with complex entries stored as (re, im) pairs.
void write_array(const std::filesystem::path& path, const ComplexImage& x, std::string_view tag = {});
void write_array(const std::filesystem::path& path, const std::vector<double>& values, const Shape& shape,
                 std::string_view tag = {});
ComplexImage read_complex_array(const std::filesystem::path& path, std::string* tag = nullptr);
std::vector<double> read_real_array(const std::filesystem::path& path, Shape* shape = nullptr,
                                    std::string* tag = nullptr);

struct Checkpoint {
  std::uint32_t version = 1;
  DenoiserNet net;
  double lambda = 1.0;
  AdamMoments theta_moments;
  AdamMoments lambda_moments;
  long step = 0;
  int epoch = 0;
  std::string rng_state;
  std::string config_text;
  std::string config_hash;

  bool operator==(const Checkpoint&) const;
};

Checkpoint make_checkpoint(const TrainState& state, const ExperimentConfig& cfg, std::string config_text);
TrainState restore_state(const Checkpoint& ckpt);

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// 8-bit binary PGM of |x| scaled by its maximum, which is kept in a header comment.
void write_pgm(const std::filesystem::path& path, const ComplexImage& x, std::string_view tag = {});

// CSV with a leading "# config_hash: ..." line.
void write_csv(const std::filesystem::path& path, std::string_view tag, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace mol
