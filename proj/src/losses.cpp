#include "ugc/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace F = torch::nn::functional;

namespace ugc {

FeatureExtractor::FeatureExtractor(int64_t in_channels, uint64_t seed)
    : in_channels_(in_channels), seed_(seed) {
  torch::NoGradGuard guard;
  torch::Generator gen = at::detail::createCPUGenerator(seed);
  const std::vector<int64_t> out_channels = {16, 32, 64};
  strides_ = {1, 2, 2};
  int64_t in_ch = in_channels;
  for (int64_t out_ch : out_channels) {
    torch::Tensor w = torch::empty({out_ch, in_ch, 3, 3});
    w.normal_(0.0, std::sqrt(2.0 / static_cast<double>(in_ch * 9)), gen);
    w.set_requires_grad(false);
    weights_.push_back(w);
    in_ch = out_ch;
  }
}

std::vector<torch::Tensor> FeatureExtractor::operator()(const torch::Tensor& x) const {
  TORCH_CHECK(x.dim() == 4 && x.size(1) == in_channels_,
              "feature extractor expects NCHW with ", in_channels_, " channels");
  std::vector<torch::Tensor> feats;
  torch::Tensor h = x;
  for (size_t i = 0; i < weights_.size(); ++i) {
    // Weights follow the input dtype so double-precision callers get
    // double-precision features.
    torch::Tensor w = weights_[i].to(x.dtype());
    h = torch::relu(F::conv2d(h, w, F::Conv2dFuncOptions().stride(strides_[i]).padding(1)));
    feats.push_back(h);
  }
  return feats;
}

namespace {

torch::Tensor clamp_prob(const torch::Tensor& p) { return p.clamp(kProbEps, 1.0 - kProbEps); }

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* who) {
  TORCH_CHECK(a.sizes() == b.sizes(), who, ": shape mismatch ", a.sizes(), " vs ", b.sizes());
}

}  // namespace

torch::Tensor gan_loss_d(const torch::Tensor& d_real, const torch::Tensor& d_fake) {
  return -clamp_prob(d_real).log().mean() - (1.0 - clamp_prob(d_fake)).log().mean();
}

torch::Tensor gan_loss_g(const torch::Tensor& d_fake, bool non_saturating) {
  if (non_saturating) return -clamp_prob(d_fake).log().mean();
  return (1.0 - clamp_prob(d_fake)).log().mean();
}

std::pair<torch::Tensor, torch::Tensor> gan_loss(const CondDiscriminator& d, const torch::Tensor& x,
                                                 const torch::Tensor& y_real,
                                                 const torch::Tensor& y_fake, bool non_saturating) {
  check_same_shape(y_real, y_fake, "gan_loss");
  torch::Tensor loss_d = gan_loss_d(d(x, y_real), d(x, y_fake));
  torch::Tensor loss_g = gan_loss_g(d(x, y_fake), non_saturating);
  return {loss_d, loss_g};
}

torch::Tensor recon_loss(const torch::Tensor& y_hat, const torch::Tensor& y) {
  check_same_shape(y_hat, y, "recon_loss");
  return (y_hat - y).abs().mean();
}

torch::Tensor ssim_loss(const torch::Tensor& a, const torch::Tensor& b, int64_t window_size,
                        double sigma) {
  check_same_shape(a, b, "ssim_loss");
  TORCH_CHECK(a.dim() == 4, "ssim_loss expects NCHW");
  if (window_size > a.size(2) || window_size > a.size(3))
    throw std::invalid_argument("ssim_loss: window larger than image");

  // Separable Gaussian window, normalized to sum 1, in the input dtype.
  torch::Tensor coords = torch::arange(window_size, a.options()) -
                         static_cast<double>(window_size - 1) / 2.0;
  torch::Tensor g1 = torch::exp(-coords.pow(2) / (2.0 * sigma * sigma));
  g1 = g1 / g1.sum();
  torch::Tensor window = torch::outer(g1, g1);
  const int64_t channels = a.size(1);
  window = window.reshape({1, 1, window_size, window_size}).expand({channels, 1, window_size, window_size});

  auto wconv = [&](const torch::Tensor& t) {
    return F::conv2d(t, window, F::Conv2dFuncOptions().groups(channels));  // valid, no padding
  };

  // Dynamic range 2 for [-1, 1] images.
  constexpr double c1 = 0.01 * 2 * 0.01 * 2;
  constexpr double c2 = 0.03 * 2 * 0.03 * 2;

  torch::Tensor mu_a = wconv(a);
  torch::Tensor mu_b = wconv(b);
  torch::Tensor mu_aa = mu_a * mu_a;
  torch::Tensor mu_bb = mu_b * mu_b;
  torch::Tensor mu_ab = mu_a * mu_b;
  torch::Tensor var_a = wconv(a * a) - mu_aa;
  torch::Tensor var_b = wconv(b * b) - mu_bb;
  torch::Tensor cov = wconv(a * b) - mu_ab;

  torch::Tensor ssim_map = ((2.0 * mu_ab + c1) * (2.0 * cov + c2)) /
                           ((mu_aa + mu_bb + c1) * (var_a + var_b + c2));
  return 1.0 - ssim_map.mean();
}

torch::Tensor gram_matrix(const torch::Tensor& f) {
  TORCH_CHECK(f.dim() == 4, "gram_matrix expects NCHW");
  const int64_t n = f.size(0), c = f.size(1), h = f.size(2), w = f.size(3);
  torch::Tensor flat = f.reshape({n, c, h * w});
  return torch::bmm(flat, flat.transpose(1, 2)) / static_cast<double>(c * h * w);
}

std::pair<torch::Tensor, torch::Tensor> perceptual_loss(const FeatureExtractor& extractor,
                                                        const torch::Tensor& a,
                                                        const torch::Tensor& b) {
  check_same_shape(a, b, "perceptual_loss");
  std::vector<torch::Tensor> fa = extractor(a);
  std::vector<torch::Tensor> fb = extractor(b);
  torch::Tensor feature = torch::zeros({}, a.options());
  torch::Tensor style = torch::zeros({}, a.options());
  for (size_t l = 0; l < fa.size(); ++l) {
    feature = feature + (fa[l] - fb[l]).abs().mean();
    style = style + (gram_matrix(fa[l]) - gram_matrix(fb[l])).abs().mean();
  }
  return {feature, style};
}

torch::Tensor tv_loss(const torch::Tensor& a) {
  TORCH_CHECK(a.dim() == 4 && a.size(2) >= 2 && a.size(3) >= 2, "tv_loss expects NCHW, spatial >= 2");
  torch::Tensor dv = (a.narrow(2, 1, a.size(2) - 1) - a.narrow(2, 0, a.size(2) - 1)).abs();
  torch::Tensor dh = (a.narrow(3, 1, a.size(3) - 1) - a.narrow(3, 0, a.size(3) - 1)).abs();
  return (dv.sum() + dh.sum()) / static_cast<double>(dv.numel() + dh.numel());
}

torch::Tensor od_loss(const LossWeights& weights, const FeatureExtractor& extractor,
                      const torch::Tensor& teacher_out, const torch::Tensor& student_out,
                      int64_t ssim_window) {
  check_same_shape(teacher_out, student_out, "od_loss");
  torch::Tensor t = teacher_out.detach();  // distillation never trains the teacher through this path
  auto [feature, style] = perceptual_loss(extractor, t, student_out);
  return weights.lambda_ssim * ssim_loss(t, student_out, ssim_window) +
         weights.lambda_feature * feature + weights.lambda_style * style +
         weights.lambda_tv * tv_loss(student_out);
}

std::pair<torch::Tensor, torch::Tensor> supervised_objective(const torch::Tensor& g_out,
                                                             const torch::Tensor& y,
                                                             const torch::Tensor& x,
                                                             const CondDiscriminator& d,
                                                             const LossWeights& weights) {
  check_same_shape(g_out, y, "supervised_objective");
  torch::Tensor loss_d = gan_loss_d(d(x, y), d(x, g_out.detach()));
  torch::Tensor loss_g =
      gan_loss_g(d(x, g_out), weights.non_saturating) + weights.lambda_recon * recon_loss(g_out, y);
  return {loss_g, loss_d};
}

}  // namespace ugc
