#ifndef UGC_STAGE2_HPP
#define UGC_STAGE2_HPP

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ugc/archspace.hpp"
#include "ugc/checkpoint.hpp"
#include "ugc/config.hpp"
#include "ugc/data.hpp"
#include "ugc/losses.hpp"

namespace ugc {

/// Exponential moving average of the discriminator's mean realism score on
/// generated batches. The first score initializes the value directly.
struct EmaTracker {
  double value = 0.0;
  double decay = 0.99;
  bool initialized = false;

  /// value <- decay * value + (1 - decay) * score. Throws on score
  /// outside [0, 1].
  void update(double score);
};

/// The distillation gate: 1 deterministically when the score is at or
/// below the tracked average (a harder-than-usual fake is trustworthy), a
/// gate_probability coin otherwise. Throws on an uninitialized tracker.
int adaptive_filter(double d_score, const EmaTracker& tracker, Rng& rng,
                    double gate_probability = 0.5);

struct Stage2StepReport {
  int64_t step = 0;
  double lr = 0.0;
  bool teacher_updated = false;
  // Teacher supervised objectives (present on update steps).
  std::optional<double> teacher_loss_g_deeper;
  std::optional<double> teacher_loss_g_wider;
  std::optional<double> teacher_loss_d;
  std::optional<double> teacher_recon_deeper;
  std::optional<double> teacher_recon_wider;
  // Student distillation objectives.
  double loss_sup_dist = 0.0;
  std::optional<double> loss_unsup_dist;
  // Per-teacher gate diagnostics (present when an unlabeled batch exists).
  std::optional<double> d_score_deeper, d_score_wider;
  std::optional<double> ema_deeper, ema_wider;
  std::optional<double> gate_deeper, gate_wider;  // mean gate over the batch
  double total = 0.0;  // sum of all present objective components
};

/// Online distillation with two teachers, a shared discriminator and a
/// discriminator-free student. Teachers keep training supervised every
/// teacher_update_interval steps; the student distills every step with
/// EMA-gated unlabeled terms.
class Stage2Trainer {
 public:
  Stage2Trainer(std::shared_ptr<StandaloneGenerator> student,
                std::shared_ptr<StandaloneGenerator> teacher_deeper,
                std::shared_ptr<StandaloneGenerator> teacher_wider,
                std::shared_ptr<PatchDiscriminator> discriminator, Stage2Config cfg,
                FeatureExtractor extractor, uint64_t gates_seed);

  /// One full scheduled step: teacher update when due, then student update.
  Stage2StepReport step(const BatchLoader::Batch& batch_a,
                        const std::optional<BatchLoader::Batch>& batch_u);

  /// Supervised adversarial update of both teachers and the shared
  /// discriminator. Never touches the student.
  void teacher_step(const BatchLoader::Batch& batch_a, Stage2StepReport& report);

  /// Distillation update of the student alone: supervised-source terms plus
  /// gated unlabeled terms. EMA trackers advance before each gate draw.
  void student_step(const BatchLoader::Batch& batch_a,
                    const std::optional<BatchLoader::Batch>& batch_u, Stage2StepReport& report);

  StandaloneGenerator& student() { return *student_; }
  StandaloneGenerator& teacher_deeper() { return *teacher_d_; }
  StandaloneGenerator& teacher_wider() { return *teacher_w_; }
  PatchDiscriminator& discriminator() { return *disc_; }
  const EmaTracker& tracker_deeper() const { return ema_d_; }
  const EmaTracker& tracker_wider() const { return ema_w_; }
  int64_t current_step() const { return step_; }

  nlohmann::json mutable_state() const;  // trackers, gate rng, step counter
  void restore_state(const nlohmann::json& j);
  void save_optimizers(const std::string& prefix) const;
  void load_optimizers(const std::string& prefix);

 private:
  std::shared_ptr<StandaloneGenerator> student_;
  std::shared_ptr<StandaloneGenerator> teacher_d_;
  std::shared_ptr<StandaloneGenerator> teacher_w_;
  std::shared_ptr<PatchDiscriminator> disc_;
  Stage2Config cfg_;
  FeatureExtractor extractor_;
  Rng gates_rng_;
  EmaTracker ema_d_, ema_w_;
  int64_t step_ = 0;
  std::unique_ptr<torch::optim::Adam> opt_s_, opt_td_, opt_tw_, opt_d_;

  void set_step_lr(double lr);
};

/// Runs the whole second stage from a first-stage checkpoint: inherits
/// weights for the student and both teachers, trains T steps with JSON step
/// logs and resume sidecars, writes the final student checkpoint plus an
/// evaluation report against eval_split. Returns the student path.
std::string run_stage2(const Checkpoint& stage1_ckpt, const ArchCode& student_code,
                       const ArchCode& deeper_code, const ArchCode& wider_code,
                       const DatasetPartition& part, const std::vector<PairedSample>& eval_split,
                       const RunConfig& cfg);

}  // namespace ugc

#endif
