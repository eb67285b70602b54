#ifndef UGC_CONFIG_HPP
#define UGC_CONFIG_HPP

#include <cstdint>
#include <string>

#include <json.hpp>

#include "ugc/archspace.hpp"
#include "ugc/losses.hpp"

namespace ugc {

struct DatasetConfig {
  std::string root = "data/toy";
  double fraction = 0.25;    // labeled share of the training ids
  uint64_t split_seed = 7;   // fixes the labeled/unlabeled manifest
  int64_t eval_count = 50;   // trailing ids held out of training entirely
};

struct Stage1Config {
  int64_t total_steps = 2000;
  int64_t batch_size_labeled = 4;
  int64_t batch_size_unlabeled = 4;
  double lr0 = 2e-4;
  double lr_constant_fraction = 0.5;  // constant lr for this share of steps, then linear to 0
  double beta1 = 0.5;
  double beta2 = 0.999;
  bool joint_update = true;  // one optimizer step for all three sampled nets; false alternates
  int64_t checkpoint_interval = 500;
  int64_t log_interval = 10;
  LossWeights weights;
};

struct EvoConfig {
  int64_t population_size = 32;
  int64_t generations = 20;
  double mutation_prob = 0.2;
  double parent_fraction = 0.25;
  int64_t student_budget_macs = 0;  // 0 = reference MACs / teacher_ratio
  double teacher_ratio = 20.0;
  double ratio_tolerance = 0.25;
  std::string fitness = "od";  // od | l1 | fid
  int64_t fitness_images = 32;
};

struct Stage2Config {
  int64_t total_steps = 2000;
  int64_t teacher_update_interval = 5;
  int64_t batch_size_labeled = 4;
  int64_t batch_size_unlabeled = 4;
  double lr0 = 2e-4;
  double lr_constant_fraction = 0.5;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double ema_decay = 0.99;
  double gate_probability = 0.5;  // acceptance probability on the above-EMA branch
  bool per_sample_gating = false;
  int64_t checkpoint_interval = 500;
  int64_t log_interval = 10;
  LossWeights weights;
};

/// The whole resolved run: every stage reads from and writes back exactly
/// this structure, so artifacts carry their own provenance.
struct RunConfig {
  DatasetConfig dataset;
  SearchSpaceSpec spec;
  Stage1Config stage1;
  EvoConfig evo;
  Stage2Config stage2;
  std::string out_dir = "runs/default";
  uint64_t seed = 17;
};

nlohmann::json config_to_json(const RunConfig& cfg);
RunConfig config_from_json(const nlohmann::json& j);

/// Applies UGC_<SECTION>_<KEY> environment overrides onto the serialized
/// config (e.g. UGC_STAGE1_TOTAL_STEPS=200, UGC_SPEC_WIDTH_CHOICES=8,16).
/// Values are parsed according to the field's existing JSON type.
void apply_env_overrides(nlohmann::json& j);

/// Reads a config file, applies environment overrides, validates.
RunConfig load_config(const std::string& path);

/// Writes the fully resolved config (two-space indent, stable key order).
void save_config(const std::string& path, const RunConfig& cfg);

}  // namespace ugc

#endif
