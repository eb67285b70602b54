#ifndef UGC_EVOSEARCH_HPP
#define UGC_EVOSEARCH_HPP

#include <functional>
#include <string>
#include <vector>

#include "ugc/archspace.hpp"
#include "ugc/config.hpp"
#include "ugc/losses.hpp"

namespace ugc {

/// Architecture fitness, larger is better. Must be deterministic against
/// the frozen weight store it closes over.
using FitnessFn = std::function<double(const ArchCode&)>;

/// Compute-budget window for one search. max_macs binds every evaluated
/// individual; min_macs (0 = unbounded) carves the teacher ratio window.
struct Budget {
  enum class Role { kStudent, kTeacherDeeper, kTeacherWider };
  int64_t max_macs = 0;
  int64_t min_macs = 0;
  Role role = Role::kStudent;
  double ratio_tolerance = 0.25;
};

struct EvoHistory {
  std::vector<double> best_fitness;  // best-so-far after each generation (non-decreasing)
  std::vector<double> mean_fitness;  // population mean per generation
};

struct EvoResult {
  ArchCode best;
  double best_fitness = 0.0;
  EvoHistory history;
};

/// Per-gene uniform resampling with probability mutation_prob.
ArchCode mutate(const ArchCode& code, const SearchSpaceSpec& spec, double mutation_prob, Rng& rng);

/// Per-gene uniform pick from the two parents. Throws on layout mismatch.
ArchCode crossover(const ArchCode& a, const ArchCode& b, Rng& rng);

/// Evolutionary search over the space under the budget. Every individual of
/// every generation respects the budget (out-of-window samples are repaired
/// by single-gene moves); elitism keeps best-so-far monotone. tie_break
/// orders equal-fitness codes (used for the teacher objectives); the final
/// tie falls back to the code key so results are deterministic.
/// Throws std::runtime_error when the budget admits no code at all.
EvoResult evolve(const SearchSpaceSpec& spec, const Budget& budget, const FitnessFn& fitness,
                 const EvoConfig& params, uint64_t seed, const FitnessFn& tie_break = nullptr);

struct TeacherSearchResult {
  ArchCode deeper;
  ArchCode wider;
  CostReport deeper_cost;
  CostReport wider_cost;
  bool window_clamped = false;  // ratio window was infeasible and degraded to the space maximum
};

/// Finds the two architecture-complementary teachers at ~teacher_ratio x
/// the student's MACs (within ratio_tolerance): one maximizing total depth,
/// one maximizing the minimum width, with the model fitness breaking ties.
TeacherSearchResult search_teachers(const SearchSpaceSpec& spec, const ArchCode& student,
                                    const FitnessFn& fitness, const EvoConfig& params,
                                    uint64_t seed);

/// Fitness factories over a frozen supernet. Evaluation runs gradient-free
/// on a fixed image slice in small forward batches.

/// Negative mean distillation loss between the largest sub-network's
/// outputs (pseudo references) and the candidate's outputs; label-free.
FitnessFn make_od_fitness(const std::shared_ptr<SuperNet>& net, const FeatureExtractor& extractor,
                          const LossWeights& weights, torch::Tensor sources);

/// Negative mean L1 against ground-truth targets.
FitnessFn make_l1_fitness(const std::shared_ptr<SuperNet>& net, torch::Tensor sources,
                          torch::Tensor targets);

/// Negative proxy distribution distance between target features and
/// candidate-output features.
FitnessFn make_fid_fitness(const std::shared_ptr<SuperNet>& net, const FeatureExtractor& extractor,
                           torch::Tensor sources, torch::Tensor targets);

}  // namespace ugc

#endif
