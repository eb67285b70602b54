#ifndef UGC_METRICS_HPP
#define UGC_METRICS_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ugc/archspace.hpp"
#include "ugc/data.hpp"
#include "ugc/losses.hpp"

namespace ugc {

/// Fixed seed of the proxy distribution-metric extractor, deliberately
/// constant (not run-seed-derived) so scores compare across runs.
inline constexpr uint64_t kProxyFidSeed = 0xF1D0;

/// Frechet distance between Gaussian fits of two feature populations
/// (rows = samples). Symmetric matrix square root via eigendecomposition;
/// small negative eigenvalues from numerical noise are clipped to zero, so
/// the result is never negative. Throws on fewer than 2 rows per side.
double fid(const torch::Tensor& features_real, const torch::Tensor& features_fake);

/// Spatially averaged top-layer features, one row per image: the feature
/// matrix the proxy distribution metric consumes.
torch::Tensor pooled_features(const FeatureExtractor& extractor, const torch::Tensor& images,
                              int64_t chunk = 8);

struct EvalReport {
  int64_t macs = 0;
  int64_t params = 0;
  double compression_ratio_macs = 0.0;    // reference / compressed
  double compression_ratio_params = 0.0;  // reference / compressed
  double l1 = 0.0;
  double ssim = 0.0;                      // mean SSIM, higher is better
  std::optional<double> fid;              // proxy-FID from the fixed random extractor
  int64_t n_eval_images = 0;
};

nlohmann::json eval_report_to_json(const EvalReport& report);

/// Evaluates a generator (any forward callable) for one architecture on a
/// fixed labeled split. Ratios compare against the full-size reference
/// generator of the same topology at the same resolution.
EvalReport evaluate(const std::function<torch::Tensor(const torch::Tensor&)>& generator,
                    const ArchCode& code, const SearchSpaceSpec& spec,
                    const std::vector<PairedSample>& eval_split, const FeatureExtractor& extractor);

/// Writes the report file and appends its one-line summary row to
/// <run_dir>/run_index.jsonl.
void write_eval_report(const std::string& run_dir, const std::string& name,
                       const EvalReport& report, double label_fraction);

}  // namespace ugc

#endif
