#include "ugc/metrics.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace ugc {

namespace {

// Unbiased covariance of rows (double precision).
torch::Tensor covariance(const torch::Tensor& x) {
  torch::Tensor centered = x - x.mean(0, /*keepdim=*/true);
  return centered.t().mm(centered) / static_cast<double>(x.size(0) - 1);
}

// Symmetric PSD square root with negative-noise clipping.
torch::Tensor psd_sqrt(const torch::Tensor& m) {
  auto [eigvals, eigvecs] = torch::linalg_eigh((m + m.t()) / 2.0);
  torch::Tensor root = eigvals.clamp_min(0).sqrt();
  return eigvecs.mm(torch::diag(root)).mm(eigvecs.t());
}

}  // namespace

double fid(const torch::Tensor& features_real, const torch::Tensor& features_fake) {
  TORCH_CHECK(features_real.dim() == 2 && features_fake.dim() == 2 &&
                  features_real.size(1) == features_fake.size(1),
              "fid expects two (n, d) feature matrices with equal d");
  if (features_real.size(0) < 2 || features_fake.size(0) < 2)
    throw std::invalid_argument("fid: need at least 2 samples per side");

  torch::NoGradGuard guard;
  torch::Tensor r = features_real.to(torch::kDouble);
  torch::Tensor f = features_fake.to(torch::kDouble);

  torch::Tensor mu_r = r.mean(0);
  torch::Tensor mu_f = f.mean(0);
  torch::Tensor cov_r = covariance(r);
  torch::Tensor cov_f = covariance(f);

  torch::Tensor diff = mu_r - mu_f;
  double mean_term = diff.dot(diff).item<double>();

  // Tr((S_r S_f)^{1/2}) via the symmetric similarity S_r^{1/2} S_f S_r^{1/2}.
  torch::Tensor half_r = psd_sqrt(cov_r);
  torch::Tensor inner = half_r.mm(cov_f).mm(half_r);
  auto [eigvals, eigvecs] = torch::linalg_eigh((inner + inner.t()) / 2.0);
  double tr_sqrt = eigvals.clamp_min(0).sqrt().sum().item<double>();

  double value = mean_term + cov_r.trace().item<double>() + cov_f.trace().item<double>() - 2.0 * tr_sqrt;
  return std::max(0.0, value);
}

torch::Tensor pooled_features(const FeatureExtractor& extractor, const torch::Tensor& images,
                              int64_t chunk) {
  torch::NoGradGuard guard;
  std::vector<torch::Tensor> rows;
  for (int64_t i = 0; i < images.size(0); i += chunk) {
    torch::Tensor batch = images.narrow(0, i, std::min(chunk, images.size(0) - i));
    rows.push_back(extractor(batch).back().mean({2, 3}));
  }
  return torch::cat(rows, 0);
}

nlohmann::json eval_report_to_json(const EvalReport& report) {
  nlohmann::json j = {{"macs", report.macs},
                      {"params", report.params},
                      {"compression_ratio_macs", report.compression_ratio_macs},
                      {"compression_ratio_params", report.compression_ratio_params},
                      {"l1", report.l1},
                      {"ssim", report.ssim},
                      {"n_eval_images", report.n_eval_images}};
  j["fid"] = report.fid ? nlohmann::json(*report.fid) : nlohmann::json();
  return j;
}

EvalReport evaluate(const std::function<torch::Tensor(const torch::Tensor&)>& generator,
                    const ArchCode& code, const SearchSpaceSpec& spec,
                    const std::vector<PairedSample>& eval_split, const FeatureExtractor& extractor) {
  if (eval_split.empty()) throw std::invalid_argument("evaluate: empty evaluation split");
  torch::NoGradGuard guard;

  EvalReport report;
  report.n_eval_images = static_cast<int64_t>(eval_split.size());

  CostReport cost = count_macs(code, spec, spec.image_size);
  auto [ref_spec, ref_code] = reference_fullsize(spec.base_topology, spec.n_stages, spec.image_size,
                                                 spec.in_channels, spec.out_channels);
  CostReport ref = count_macs(ref_code, ref_spec, spec.image_size);
  report.macs = cost.macs;
  report.params = cost.params;
  report.compression_ratio_macs = static_cast<double>(ref.macs) / static_cast<double>(cost.macs);
  report.compression_ratio_params =
      static_cast<double>(ref.params) / static_cast<double>(cost.params);

  std::vector<torch::Tensor> outs, targets;
  double l1_sum = 0.0, ssim_sum = 0.0;
  const int64_t chunk = 8;
  for (size_t i = 0; i < eval_split.size(); i += chunk) {
    std::vector<torch::Tensor> xs, ys;
    for (size_t k = i; k < std::min(eval_split.size(), i + chunk); ++k) {
      if (!eval_split[k].target.has_value())
        throw std::invalid_argument("evaluate: split must be fully labeled");
      xs.push_back(eval_split[k].source);
      ys.push_back(*eval_split[k].target);
    }
    torch::Tensor x = torch::stack(xs);
    torch::Tensor y = torch::stack(ys);
    torch::Tensor out = generator(x);
    const double n = static_cast<double>(x.size(0));
    l1_sum += (out - y).abs().mean().item<double>() * n;
    ssim_sum += (1.0 - ssim_loss(out, y).item<double>()) * n;
    outs.push_back(out);
    targets.push_back(y);
  }
  report.l1 = l1_sum / static_cast<double>(eval_split.size());
  report.ssim = ssim_sum / static_cast<double>(eval_split.size());

  torch::Tensor all_out = torch::cat(outs, 0);
  torch::Tensor all_target = torch::cat(targets, 0);
  if (all_out.size(0) >= 2)
    report.fid = fid(pooled_features(extractor, all_target), pooled_features(extractor, all_out));
  return report;
}

void write_eval_report(const std::string& run_dir, const std::string& name,
                       const EvalReport& report, double label_fraction) {
  fs::create_directories(run_dir);
  nlohmann::json j = eval_report_to_json(report);
  j["name"] = name;
  j["label_fraction"] = label_fraction;

  std::ofstream report_file((fs::path(run_dir) / ("eval_" + name + ".json")).string());
  report_file << j.dump(2) << "\n";

  std::ofstream index((fs::path(run_dir) / "run_index.jsonl").string(), std::ios::app);
  index << j.dump() << "\n";
}

}  // namespace ugc
