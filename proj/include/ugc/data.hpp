#ifndef UGC_DATA_HPP
#define UGC_DATA_HPP

#include <torch/torch.h>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ugc/rng.hpp"

namespace ugc {

/// One paired-translation sample; target is absent for unlabeled samples.
/// Images are float32 (3, H, W) in [-1, 1].
struct PairedSample {
  torch::Tensor source;
  std::optional<torch::Tensor> target;
  std::string id;
};

/// Deterministic labeled/unlabeled split of a dataset root.
struct DatasetPartition {
  std::string root;
  std::vector<std::string> labeled_ids;    // sorted
  std::vector<std::string> unlabeled_ids;  // sorted
  double fraction = 0.0;
  uint64_t seed = 0;
};

/// Splits ids into labeled/unlabeled. |labeled| = round-half-up of
/// fraction * N; deterministic in (ids, fraction, seed).
DatasetPartition partition(const std::vector<std::string>& all_ids, double fraction, uint64_t seed);

/// Sorted sample ids found under root/source/.
std::vector<std::string> list_ids(const std::string& root);

/// Path of the split manifest for (fraction, seed) under root/splits/.
std::string manifest_path(const std::string& root, double fraction, uint64_t seed);

/// Loads the manifest if present, else computes the partition and writes
/// it, so every later run sees the identical split.
DatasetPartition load_or_create_partition(const std::string& root, double fraction, uint64_t seed);

/// Reads one sample from disk (root/source/<id>.png and, if labeled,
/// root/target/<id>.png).
PairedSample load_sample(const std::string& root, const std::string& id, bool labeled);

/// Training partition plus a held-out evaluation tail: the last eval_count
/// ids (sorted order) never enter training; the rest split per the
/// manifest. eval_count 0 holds nothing out.
struct DataSplits {
  DatasetPartition train;
  std::vector<std::string> eval_ids;
};

DataSplits prepare_splits(const std::string& root, double fraction, uint64_t split_seed,
                          int64_t eval_count);

/// Loads the evaluation tail as fully labeled samples.
std::vector<PairedSample> load_eval_samples(const std::string& root,
                                            const std::vector<std::string>& ids);

/// Writes a deterministic synthetic paired corpus: sources are white shape
/// outlines on black, targets the same shapes filled with colors that are a
/// fixed function of shape kind and size. Same (n, resolution, seed) gives
/// byte-identical directories.
void synth_generate(const std::string& root, int64_t n, int64_t resolution, uint64_t seed);

enum class Split { kLabeled, kUnlabeled };

/// Epoch-wise shuffled batching without replacement. Batches may straddle
/// an epoch boundary; each full permutation visits every id exactly once.
/// Caches decoded images in memory (desk-scale corpora are small).
class BatchLoader {
 public:
  struct Batch {
    torch::Tensor source;                 // (B, 3, H, W)
    std::optional<torch::Tensor> target;  // present for the labeled split
    std::vector<std::string> ids;
  };

  BatchLoader(const DatasetPartition& part, Split split, int64_t batch_size, Rng rng);

  Batch next();

  int64_t size() const { return static_cast<int64_t>(ids_.size()); }

  /// Serializable position (rng state, current permutation, cursor) so a
  /// resumed run replays the identical visit order.
  nlohmann::json state() const;
  void restore(const nlohmann::json& j);

 private:
  std::string root_;
  std::vector<std::string> ids_;
  bool labeled_;
  int64_t batch_size_;
  Rng rng_;
  std::vector<int64_t> order_;
  size_t cursor_ = 0;
  std::map<std::string, PairedSample> cache_;

  const PairedSample& sample(const std::string& id);
};

}  // namespace ugc

#endif
