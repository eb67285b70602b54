#ifndef UGC_LOSSES_HPP
#define UGC_LOSSES_HPP

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

namespace ugc {

/// Objective weights. The four distillation weights default to the fixed
/// working point (1e1, 1e4, 1e1, 1e-5); lambda_recon defaults to the
/// conventional 100 for paired translation.
struct LossWeights {
  double lambda_recon = 100.0;
  double lambda_ssim = 1e1;
  double lambda_feature = 1e4;
  double lambda_style = 1e1;
  double lambda_tv = 1e-5;
  // Non-saturating generator term (-log D); false selects the literal
  // minimax form (+log(1-D)).
  bool non_saturating = true;
};

/// Conditional discriminator as a callable: scores the (source, target)
/// pair with per-patch probabilities in (0, 1). Tests inject closed-form
/// stand-ins; training passes the real module's forward.
using CondDiscriminator = std::function<torch::Tensor(const torch::Tensor&, const torch::Tensor&)>;

/// Fixed random convolutional feature pyramid: an immutable, seed-fixed
/// map from image batch to an ordered list of feature maps. Serves both the
/// perceptual terms and the proxy distribution metric.
class FeatureExtractor {
 public:
  FeatureExtractor(int64_t in_channels, uint64_t seed);

  std::vector<torch::Tensor> operator()(const torch::Tensor& x) const;

  uint64_t seed() const { return seed_; }
  int64_t in_channels() const { return in_channels_; }
  /// Channel count of the final (coarsest) feature map.
  int64_t top_channels() const { return weights_.back().size(0); }

 private:
  int64_t in_channels_;
  uint64_t seed_;
  std::vector<torch::Tensor> weights_;  // fixed, never trained
  std::vector<int64_t> strides_;
};

/// Probability clamp applied before every log so GAN terms stay finite.
inline constexpr double kProbEps = 1e-7;

/// Discriminator loss from already-computed scores:
/// -E[log d_real] - E[log(1 - d_fake)].
torch::Tensor gan_loss_d(const torch::Tensor& d_real, const torch::Tensor& d_fake);

/// Generator loss from fake scores: -E[log d_fake], or the literal minimax
/// +E[log(1 - d_fake)] when non_saturating is false.
torch::Tensor gan_loss_g(const torch::Tensor& d_fake, bool non_saturating = true);

/// Both adversarial terms for a conditional discriminator. Pure: callers
/// decide what is detached and which parameters update.
std::pair<torch::Tensor, torch::Tensor> gan_loss(const CondDiscriminator& d,
                                                 const torch::Tensor& x,
                                                 const torch::Tensor& y_real,
                                                 const torch::Tensor& y_fake,
                                                 bool non_saturating = true);

/// Mean absolute error over all elements.
torch::Tensor recon_loss(const torch::Tensor& y_hat, const torch::Tensor& y);

/// 1 - mean SSIM with a Gaussian window (default 11, sigma 1.5) and
/// stability constants for the [-1, 1] dynamic range. Valid (unpadded)
/// windowing; throws std::invalid_argument if the window exceeds the image.
torch::Tensor ssim_loss(const torch::Tensor& a, const torch::Tensor& b,
                        int64_t window_size = 11, double sigma = 1.5);

/// Per-sample channel Gram matrix of a feature map, normalized by the
/// layer's element count (C*H*W). Shape (N, C, C).
torch::Tensor gram_matrix(const torch::Tensor& f);

/// Johnson-style perceptual terms: summed over layers, mean |feature diff|
/// and mean |Gram diff|.
std::pair<torch::Tensor, torch::Tensor> perceptual_loss(const FeatureExtractor& extractor,
                                                        const torch::Tensor& a,
                                                        const torch::Tensor& b);

/// Mean absolute horizontal plus vertical neighbor difference.
torch::Tensor tv_loss(const torch::Tensor& a);

/// The online-distillation composite: weighted SSIM + feature + style terms
/// against a gradient-blocked teacher, plus TV on the student alone.
/// ssim_window is exposed for small inputs; default matches ssim_loss.
torch::Tensor od_loss(const LossWeights& weights, const FeatureExtractor& extractor,
                      const torch::Tensor& teacher_out, const torch::Tensor& student_out,
                      int64_t ssim_window = 11);

/// Supervised objective on labeled pairs: generator term (adversarial +
/// lambda_recon * L1) and discriminator term. The discriminator's fake term
/// sees a detached g_out so the two scalars back-propagate independently.
std::pair<torch::Tensor, torch::Tensor> supervised_objective(const torch::Tensor& g_out,
                                                             const torch::Tensor& y,
                                                             const torch::Tensor& x,
                                                             const CondDiscriminator& d,
                                                             const LossWeights& weights);

}  // namespace ugc

#endif
