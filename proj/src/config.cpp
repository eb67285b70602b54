#include "ugc/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ugc/checkpoint.hpp"

namespace ugc {

namespace {

nlohmann::json weights_to_json(const LossWeights& w) {
  return {{"lambda_recon", w.lambda_recon}, {"lambda_ssim", w.lambda_ssim},
          {"lambda_feature", w.lambda_feature}, {"lambda_style", w.lambda_style},
          {"lambda_tv", w.lambda_tv}, {"non_saturating", w.non_saturating}};
}

LossWeights weights_from_json(const nlohmann::json& j) {
  LossWeights w;
  w.lambda_recon = j.at("lambda_recon").get<double>();
  w.lambda_ssim = j.at("lambda_ssim").get<double>();
  w.lambda_feature = j.at("lambda_feature").get<double>();
  w.lambda_style = j.at("lambda_style").get<double>();
  w.lambda_tv = j.at("lambda_tv").get<double>();
  w.non_saturating = j.at("non_saturating").get<bool>();
  if (w.lambda_recon < 0 || w.lambda_ssim < 0 || w.lambda_feature < 0 || w.lambda_style < 0 ||
      w.lambda_tv < 0)
    throw std::invalid_argument("loss weights must be non-negative");
  return w;
}

}  // namespace

nlohmann::json config_to_json(const RunConfig& cfg) {
  return {
      {"dataset",
       {{"root", cfg.dataset.root},
        {"fraction", cfg.dataset.fraction},
        {"split_seed", cfg.dataset.split_seed},
        {"eval_count", cfg.dataset.eval_count}}},
      {"spec", spec_to_json(cfg.spec)},
      {"stage1",
       {{"total_steps", cfg.stage1.total_steps},
        {"batch_size_labeled", cfg.stage1.batch_size_labeled},
        {"batch_size_unlabeled", cfg.stage1.batch_size_unlabeled},
        {"lr0", cfg.stage1.lr0},
        {"lr_constant_fraction", cfg.stage1.lr_constant_fraction},
        {"beta1", cfg.stage1.beta1},
        {"beta2", cfg.stage1.beta2},
        {"joint_update", cfg.stage1.joint_update},
        {"checkpoint_interval", cfg.stage1.checkpoint_interval},
        {"log_interval", cfg.stage1.log_interval}}},
      {"evo",
       {{"population_size", cfg.evo.population_size},
        {"generations", cfg.evo.generations},
        {"mutation_prob", cfg.evo.mutation_prob},
        {"parent_fraction", cfg.evo.parent_fraction},
        {"student_budget_macs", cfg.evo.student_budget_macs},
        {"teacher_ratio", cfg.evo.teacher_ratio},
        {"ratio_tolerance", cfg.evo.ratio_tolerance},
        {"fitness", cfg.evo.fitness},
        {"fitness_images", cfg.evo.fitness_images}}},
      {"stage2",
       {{"total_steps", cfg.stage2.total_steps},
        {"teacher_update_interval", cfg.stage2.teacher_update_interval},
        {"batch_size_labeled", cfg.stage2.batch_size_labeled},
        {"batch_size_unlabeled", cfg.stage2.batch_size_unlabeled},
        {"lr0", cfg.stage2.lr0},
        {"lr_constant_fraction", cfg.stage2.lr_constant_fraction},
        {"beta1", cfg.stage2.beta1},
        {"beta2", cfg.stage2.beta2},
        {"ema_decay", cfg.stage2.ema_decay},
        {"gate_probability", cfg.stage2.gate_probability},
        {"per_sample_gating", cfg.stage2.per_sample_gating},
        {"checkpoint_interval", cfg.stage2.checkpoint_interval},
        {"log_interval", cfg.stage2.log_interval}}},
      {"weights", weights_to_json(cfg.stage1.weights)},
      {"run", {{"out_dir", cfg.out_dir}, {"seed", cfg.seed}}}};
}

RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig cfg;
  const auto& ds = j.at("dataset");
  cfg.dataset.root = ds.at("root").get<std::string>();
  cfg.dataset.fraction = ds.at("fraction").get<double>();
  cfg.dataset.split_seed = ds.at("split_seed").get<uint64_t>();
  cfg.dataset.eval_count = ds.at("eval_count").get<int64_t>();

  cfg.spec = spec_from_json(j.at("spec"));

  const auto& s1 = j.at("stage1");
  cfg.stage1.total_steps = s1.at("total_steps").get<int64_t>();
  cfg.stage1.batch_size_labeled = s1.at("batch_size_labeled").get<int64_t>();
  cfg.stage1.batch_size_unlabeled = s1.at("batch_size_unlabeled").get<int64_t>();
  cfg.stage1.lr0 = s1.at("lr0").get<double>();
  cfg.stage1.lr_constant_fraction = s1.at("lr_constant_fraction").get<double>();
  cfg.stage1.beta1 = s1.at("beta1").get<double>();
  cfg.stage1.beta2 = s1.at("beta2").get<double>();
  cfg.stage1.joint_update = s1.at("joint_update").get<bool>();
  cfg.stage1.checkpoint_interval = s1.at("checkpoint_interval").get<int64_t>();
  cfg.stage1.log_interval = s1.at("log_interval").get<int64_t>();

  const auto& ev = j.at("evo");
  cfg.evo.population_size = ev.at("population_size").get<int64_t>();
  cfg.evo.generations = ev.at("generations").get<int64_t>();
  cfg.evo.mutation_prob = ev.at("mutation_prob").get<double>();
  cfg.evo.parent_fraction = ev.at("parent_fraction").get<double>();
  cfg.evo.student_budget_macs = ev.at("student_budget_macs").get<int64_t>();
  cfg.evo.teacher_ratio = ev.at("teacher_ratio").get<double>();
  cfg.evo.ratio_tolerance = ev.at("ratio_tolerance").get<double>();
  cfg.evo.fitness = ev.at("fitness").get<std::string>();
  cfg.evo.fitness_images = ev.at("fitness_images").get<int64_t>();

  const auto& s2 = j.at("stage2");
  cfg.stage2.total_steps = s2.at("total_steps").get<int64_t>();
  cfg.stage2.teacher_update_interval = s2.at("teacher_update_interval").get<int64_t>();
  cfg.stage2.batch_size_labeled = s2.at("batch_size_labeled").get<int64_t>();
  cfg.stage2.batch_size_unlabeled = s2.at("batch_size_unlabeled").get<int64_t>();
  cfg.stage2.lr0 = s2.at("lr0").get<double>();
  cfg.stage2.lr_constant_fraction = s2.at("lr_constant_fraction").get<double>();
  cfg.stage2.beta1 = s2.at("beta1").get<double>();
  cfg.stage2.beta2 = s2.at("beta2").get<double>();
  cfg.stage2.ema_decay = s2.at("ema_decay").get<double>();
  cfg.stage2.gate_probability = s2.at("gate_probability").get<double>();
  cfg.stage2.per_sample_gating = s2.at("per_sample_gating").get<bool>();
  cfg.stage2.checkpoint_interval = s2.at("checkpoint_interval").get<int64_t>();
  cfg.stage2.log_interval = s2.at("log_interval").get<int64_t>();

  LossWeights w = weights_from_json(j.at("weights"));
  cfg.stage1.weights = w;
  cfg.stage2.weights = w;

  const auto& run = j.at("run");
  cfg.out_dir = run.at("out_dir").get<std::string>();
  cfg.seed = run.at("seed").get<uint64_t>();

  if (!(cfg.dataset.fraction > 0.0 && cfg.dataset.fraction <= 1.0))
    throw std::invalid_argument("dataset.fraction must be in (0, 1]");
  if (cfg.stage1.total_steps <= 0 || cfg.stage2.total_steps <= 0)
    throw std::invalid_argument("total_steps must be positive");
  if (cfg.stage1.lr0 <= 0 || cfg.stage2.lr0 <= 0) throw std::invalid_argument("lr0 must be positive");
  if (cfg.stage1.lr_constant_fraction < 0 || cfg.stage1.lr_constant_fraction > 1 ||
      cfg.stage2.lr_constant_fraction < 0 || cfg.stage2.lr_constant_fraction > 1)
    throw std::invalid_argument("lr_constant_fraction must be in [0, 1]");
  if (cfg.evo.population_size < 2) throw std::invalid_argument("evo.population_size must be >= 2");
  if (cfg.evo.mutation_prob < 0 || cfg.evo.mutation_prob > 1 || cfg.evo.parent_fraction < 0 ||
      cfg.evo.parent_fraction > 1)
    throw std::invalid_argument("evo probabilities must be in [0, 1]");
  if (cfg.stage2.teacher_update_interval < 1)
    throw std::invalid_argument("stage2.teacher_update_interval must be >= 1");
  if (cfg.stage2.gate_probability < 0 || cfg.stage2.gate_probability > 1)
    throw std::invalid_argument("stage2.gate_probability must be in [0, 1]");
  if (cfg.stage2.ema_decay < 0 || cfg.stage2.ema_decay >= 1)
    throw std::invalid_argument("stage2.ema_decay must be in [0, 1)");
  if (cfg.evo.fitness != "od" && cfg.evo.fitness != "l1" && cfg.evo.fitness != "fid")
    throw std::invalid_argument("evo.fitness must be one of od, l1, fid");
  if (cfg.evo.fitness_images < 1)
    throw std::invalid_argument("evo.fitness_images must be >= 1");
  return cfg;
}

namespace {

std::string env_key(const std::string& section, const std::string& key) {
  std::string out = "UGC_" + section + "_" + key;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

nlohmann::json parse_env_value(const std::string& raw, const nlohmann::json& current) {
  auto parse_scalar = [](const std::string& s, const nlohmann::json& like) -> nlohmann::json {
    if (like.is_boolean()) {
      std::string low = s;
      std::transform(low.begin(), low.end(), low.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      if (low == "1" || low == "true" || low == "yes" || low == "on") return true;
      if (low == "0" || low == "false" || low == "no" || low == "off") return false;
      throw std::invalid_argument("cannot parse boolean override: " + s);
    }
    if (like.is_number_integer() || like.is_number_unsigned()) return std::stoll(s);
    if (like.is_number_float()) return std::stod(s);
    return s;  // string field
  };

  if (current.is_array()) {
    nlohmann::json like = current.empty() ? nlohmann::json(int64_t{0}) : current.front();
    nlohmann::json arr = nlohmann::json::array();
    std::stringstream ss(raw);
    for (std::string item; std::getline(ss, item, ',');)
      if (!item.empty()) arr.push_back(parse_scalar(item, like));
    return arr;
  }
  return parse_scalar(raw, current);
}

}  // namespace

void apply_env_overrides(nlohmann::json& j) {
  for (auto& [section, body] : j.items()) {
    if (!body.is_object()) continue;
    for (auto& [key, value] : body.items()) {
      const char* raw = std::getenv(env_key(section, key).c_str());
      if (!raw) continue;
      value = parse_env_value(raw, value);
    }
  }
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file: " + path);
  nlohmann::json user = nlohmann::json::parse(is);
  // A config file only needs the keys it wants to change; everything else
  // falls back to the compiled-in defaults.  Arrays (choice lists) are
  // replaced wholesale, not element-merged.
  nlohmann::json j = config_to_json(RunConfig{});
  j.merge_patch(user);
  apply_env_overrides(j);
  return config_from_json(j);
}

void save_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write config file: " + path);
  os << config_to_json(cfg).dump(2) << "\n";
}

}  // namespace ugc
