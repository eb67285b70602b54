#ifndef UGC_STAGE1_HPP
#define UGC_STAGE1_HPP

#include <memory>
#include <optional>
#include <string>

#include "ugc/archspace.hpp"
#include "ugc/config.hpp"
#include "ugc/data.hpp"
#include "ugc/losses.hpp"

namespace ugc {

/// Constant at lr0 for the first lr_constant_fraction of steps, then linear
/// down to exactly 0 at total_steps. Throws on step outside [0, T].
double lr_schedule(int64_t step, int64_t total_steps, double lr0, double lr_constant_fraction);

struct Stage1StepReport {
  int64_t step = 0;
  double lr = 0.0;
  double loss_sup_g = 0.0;
  double loss_sup_d = 0.0;
  std::optional<double> loss_dist_r;  // absent when no unlabeled batch
  std::optional<double> loss_dist_s;
  ArchCode random_code;
};

/// One sandwich-rule training step: the largest sub-network trains
/// adversarially on labeled pairs, then the random and smallest
/// sub-networks distill its pseudo-pairs on unlabeled sources, all into the
/// shared weight store.
class Stage1Trainer {
 public:
  Stage1Trainer(SuperNetState state, Stage1Config cfg, FeatureExtractor extractor,
                uint64_t sandwich_seed);

  Stage1StepReport step(const BatchLoader::Batch& batch_a,
                        const std::optional<BatchLoader::Batch>& batch_u);

  SuperNetState& state() { return state_; }
  Rng& sandwich_rng() { return sandwich_rng_; }

  /// Optimizer moments for exact resume, via the tensor archive format.
  void save_optimizers(const std::string& prefix) const;
  void load_optimizers(const std::string& prefix);

 private:
  SuperNetState state_;
  Stage1Config cfg_;
  FeatureExtractor extractor_;
  Rng sandwich_rng_;
  std::unique_ptr<torch::optim::Adam> opt_g_;
  std::unique_ptr<torch::optim::Adam> opt_d_;
};

/// Runs the full first stage against the partition: T steps, per-step JSON
/// log lines, periodic checkpoints with resume sidecars. Returns the final
/// checkpoint path (<out_dir>/stage1.ckpt).
std::string run_stage1(const DatasetPartition& part, const SearchSpaceSpec& spec,
                       const RunConfig& cfg);

}  // namespace ugc

#endif
