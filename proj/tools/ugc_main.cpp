#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ugc/checkpoint.hpp"
#include "ugc/config.hpp"
#include "ugc/data.hpp"
#include "ugc/evosearch.hpp"
#include "ugc/metrics.hpp"
#include "ugc/report.hpp"
#include "ugc/stage1.hpp"
#include "ugc/stage2.hpp"

namespace fs = std::filesystem;
using namespace ugc;

namespace {

void require_file(const std::string& path, const std::string& producer) {
  if (!fs::exists(path))
    throw std::runtime_error("required artifact missing: " + path + " (run `" + producer +
                             "` first)");
}

RunConfig load_run_config(const std::string& path) {
  require_file(path, "write a config file; see README");
  return load_config(path);
}

torch::Tensor stack_sources(const std::string& root, const std::vector<std::string>& ids,
                            int64_t limit) {
  std::vector<torch::Tensor> xs;
  for (int64_t i = 0; i < std::min<int64_t>(limit, static_cast<int64_t>(ids.size())); ++i)
    xs.push_back(load_sample(root, ids[static_cast<size_t>(i)], false).source);
  return torch::stack(xs);
}

std::pair<torch::Tensor, torch::Tensor> stack_pairs(const std::string& root,
                                                    const std::vector<std::string>& ids,
                                                    int64_t limit) {
  std::vector<torch::Tensor> xs, ys;
  for (int64_t i = 0; i < std::min<int64_t>(limit, static_cast<int64_t>(ids.size())); ++i) {
    PairedSample s = load_sample(root, ids[static_cast<size_t>(i)], true);
    xs.push_back(s.source);
    ys.push_back(*s.target);
  }
  return {torch::stack(xs), torch::stack(ys)};
}

int cmd_synth_data(int64_t n, int64_t size, uint64_t seed, const std::string& out) {
  synth_generate(out, n, size, seed);
  std::cout << "wrote " << n << " paired samples at " << size << "x" << size << " under " << out
            << "\n";
  return 0;
}

int cmd_stage1(const std::string& config_path) {
  RunConfig cfg = load_run_config(config_path);
  fs::create_directories(cfg.out_dir);
  save_config((fs::path(cfg.out_dir) / "config.json").string(), cfg);
  DataSplits splits =
      prepare_splits(cfg.dataset.root, cfg.dataset.fraction, cfg.dataset.split_seed,
                     cfg.dataset.eval_count);
  std::string path = run_stage1(splits.train, cfg.spec, cfg);
  std::cout << "stage 1 checkpoint: " << path << "\n";
  return 0;
}

int cmd_search(const std::string& config_path) {
  RunConfig cfg = load_run_config(config_path);
  const std::string ckpt_path = (fs::path(cfg.out_dir) / "stage1.ckpt").string();
  require_file(ckpt_path, "ugc stage1 --config " + config_path);

  Checkpoint ckpt = load_checkpoint(ckpt_path);
  auto net = std::make_shared<SuperNet>(ckpt.spec, 0);
  net->load_tensors(ckpt.generator);

  DataSplits splits =
      prepare_splits(cfg.dataset.root, cfg.dataset.fraction, cfg.dataset.split_seed,
                     cfg.dataset.eval_count);
  FeatureExtractor extractor(ckpt.spec.out_channels, substream_seed(cfg.seed, "extractor"));

  FitnessFn fitness;
  if (cfg.evo.fitness == "od") {
    const auto& ids = splits.train.unlabeled_ids.empty() ? splits.train.labeled_ids
                                                         : splits.train.unlabeled_ids;
    fitness = make_od_fitness(net, extractor, cfg.stage1.weights,
                              stack_sources(cfg.dataset.root, ids, cfg.evo.fitness_images));
  } else if (cfg.evo.fitness == "l1" || cfg.evo.fitness == "fid") {
    auto [x, y] = stack_pairs(cfg.dataset.root, splits.train.labeled_ids, cfg.evo.fitness_images);
    fitness = cfg.evo.fitness == "l1"
                  ? make_l1_fitness(net, x, y)
                  : make_fid_fitness(net, FeatureExtractor(ckpt.spec.out_channels, kProxyFidSeed),
                                     x, y);
  } else {
    throw std::runtime_error("unknown evo.fitness: " + cfg.evo.fitness);
  }

  const int64_t largest_macs =
      count_macs(sample_largest(ckpt.spec), ckpt.spec, ckpt.spec.image_size).macs;
  Budget student_budget;
  student_budget.max_macs =
      cfg.evo.student_budget_macs > 0
          ? cfg.evo.student_budget_macs
          : static_cast<int64_t>(static_cast<double>(largest_macs) / cfg.evo.teacher_ratio);
  student_budget.ratio_tolerance = cfg.evo.ratio_tolerance;

  EvoResult student =
      evolve(ckpt.spec, student_budget, fitness, cfg.evo, substream_seed(cfg.seed, "evolution"));
  TeacherSearchResult teachers = search_teachers(ckpt.spec, student.best, fitness, cfg.evo,
                                                 substream_seed(cfg.seed, "evolution.teachers"));

  CostReport student_cost = count_macs(student.best, ckpt.spec, ckpt.spec.image_size);
  nlohmann::json out = {
      {"student",
       {{"code", code_to_json(student.best)},
        {"macs", student_cost.macs},
        {"params", student_cost.params},
        {"fitness", student.best_fitness}}},
      {"teacher_deeper",
       {{"code", code_to_json(teachers.deeper)},
        {"macs", teachers.deeper_cost.macs},
        {"params", teachers.deeper_cost.params},
        {"macs_ratio", static_cast<double>(teachers.deeper_cost.macs) /
                           static_cast<double>(student_cost.macs)}}},
      {"teacher_wider",
       {{"code", code_to_json(teachers.wider)},
        {"macs", teachers.wider_cost.macs},
        {"params", teachers.wider_cost.params},
        {"macs_ratio", static_cast<double>(teachers.wider_cost.macs) /
                           static_cast<double>(student_cost.macs)}}},
      {"window_clamped", teachers.window_clamped},
      {"budget_max_macs", student_budget.max_macs},
      {"history",
       {{"best_fitness", student.history.best_fitness},
        {"mean_fitness", student.history.mean_fitness}}}};

  const std::string search_path = (fs::path(cfg.out_dir) / "search.json").string();
  std::ofstream os(search_path);
  os << out.dump(2) << "\n";
  std::cout << "student " << student.best.key() << " (" << student_cost.macs << " MACs)\n"
            << "teacher deeper " << teachers.deeper.key() << " (" << teachers.deeper_cost.macs
            << " MACs)\nteacher wider " << teachers.wider.key() << " ("
            << teachers.wider_cost.macs << " MACs)\nwrote " << search_path << "\n";
  return 0;
}

int cmd_stage2(const std::string& config_path) {
  RunConfig cfg = load_run_config(config_path);
  const std::string ckpt_path = (fs::path(cfg.out_dir) / "stage1.ckpt").string();
  const std::string search_path = (fs::path(cfg.out_dir) / "search.json").string();
  require_file(ckpt_path, "ugc stage1 --config " + config_path);
  require_file(search_path, "ugc search --config " + config_path);

  Checkpoint ckpt = load_checkpoint(ckpt_path);
  std::ifstream is(search_path);
  nlohmann::json codes = nlohmann::json::parse(is);
  ArchCode student = code_from_json(codes.at("student").at("code"));
  ArchCode deeper = code_from_json(codes.at("teacher_deeper").at("code"));
  ArchCode wider = code_from_json(codes.at("teacher_wider").at("code"));
  require_valid(student, ckpt.spec);
  require_valid(deeper, ckpt.spec);
  require_valid(wider, ckpt.spec);

  DataSplits splits =
      prepare_splits(cfg.dataset.root, cfg.dataset.fraction, cfg.dataset.split_seed,
                     cfg.dataset.eval_count);
  std::vector<PairedSample> eval_split = load_eval_samples(cfg.dataset.root, splits.eval_ids);

  std::string path = run_stage2(ckpt, student, deeper, wider, splits.train, eval_split, cfg);
  std::cout << "stage 2 student checkpoint: " << path << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_root, int64_t eval_count,
             std::string out_dir, std::string name, double label_fraction,
             const std::string& arch) {
  require_file(ckpt_path, "ugc stage1/stage2");
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  if (out_dir.empty()) out_dir = fs::path(ckpt_path).parent_path().string();
  if (name.empty()) name = fs::path(ckpt_path).stem().string();

  std::vector<std::string> ids = list_ids(data_root);
  if (eval_count <= 0 || eval_count >= static_cast<int64_t>(ids.size()))
    throw std::runtime_error("eval: --eval-count must be in (0, dataset size)");
  std::vector<PairedSample> eval_split =
      load_eval_samples(data_root, {ids.end() - eval_count, ids.end()});

  ArchCode code;
  std::function<torch::Tensor(const torch::Tensor&)> forward;
  std::shared_ptr<StandaloneGenerator> standalone;
  std::shared_ptr<SuperNet> net;
  if (ckpt.code) {
    code = *ckpt.code;
    standalone = std::make_shared<StandaloneGenerator>(ckpt.spec, code, 0);
    standalone->load_tensors(ckpt.generator);
    forward = [standalone](const torch::Tensor& x) {
      torch::NoGradGuard guard;
      return standalone->forward(x);
    };
  } else {
    net = std::make_shared<SuperNet>(ckpt.spec, 0);
    net->load_tensors(ckpt.generator);
    if (arch == "largest")
      code = sample_largest(ckpt.spec);
    else if (arch == "smallest")
      code = sample_smallest(ckpt.spec);
    else
      throw std::runtime_error("eval: --arch must be largest or smallest for supernet snapshots");
    forward = [net, code](const torch::Tensor& x) {
      torch::NoGradGuard guard;
      return net->forward(code, x);
    };
  }

  FeatureExtractor extractor(ckpt.spec.out_channels, kProxyFidSeed);
  EvalReport report = evaluate(forward, code, ckpt.spec, eval_split, extractor);
  write_eval_report(out_dir, name, report, label_fraction);
  std::cout << eval_report_to_json(report).dump(2) << "\n";
  return 0;
}

int cmd_report(const std::string& run_dir) {
  generate_report(run_dir);
  std::cout << "wrote plots under " << run_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  torch::set_num_threads(1);  // deterministic, and toy-scale tensors gain nothing from threads

  CLI::App app{"two-stage GAN compression: supernet search + online distillation"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth-data", "generate the synthetic paired corpus");
  int64_t n = 500, size = 64;
  uint64_t synth_seed = 7;
  std::string synth_out;
  synth->add_option("--n", n, "number of pairs");
  synth->add_option("--size", size, "image resolution");
  synth->add_option("--seed", synth_seed, "corpus seed");
  synth->add_option("--out", synth_out, "output dataset root")->required();

  std::string config_path;
  auto* stage1 = app.add_subcommand("stage1", "train the weight-sharing supernet");
  stage1->add_option("--config", config_path, "run config file")->required();
  auto* search = app.add_subcommand("search", "evolutionary student + teacher search");
  search->add_option("--config", config_path, "run config file")->required();
  auto* stage2 = app.add_subcommand("stage2", "online multi-teacher distillation");
  stage2->add_option("--config", config_path, "run config file")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the held-out tail");
  std::string eval_ckpt, eval_data, eval_out, eval_name, eval_arch = "largest";
  int64_t eval_count = 50;
  double label_fraction = 0.0;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--data", eval_data, "dataset root")->required();
  eval->add_option("--eval-count", eval_count, "held-out tail size");
  eval->add_option("--out", eval_out, "report directory (default: checkpoint directory)");
  eval->add_option("--name", eval_name, "report row name (default: checkpoint stem)");
  eval->add_option("--label-fraction", label_fraction, "label fraction recorded in the report row");
  eval->add_option("--arch", eval_arch, "sub-network for supernet snapshots: largest|smallest");

  auto* report = app.add_subcommand("report", "emit trade-off plots from logged evaluations");
  std::string run_dir;
  report->add_option("--run-dir", run_dir, "directory holding run_index.jsonl")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // usage problems exit 2; --help exits 0
  }

  try {
    if (synth->parsed()) return cmd_synth_data(n, size, synth_seed, synth_out);
    if (stage1->parsed()) return cmd_stage1(config_path);
    if (search->parsed()) return cmd_search(config_path);
    if (stage2->parsed()) return cmd_stage2(config_path);
    if (eval->parsed())
      return cmd_eval(eval_ckpt, eval_data, eval_count, eval_out, eval_name, label_fraction,
                      eval_arch);
    if (report->parsed()) return cmd_report(run_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
