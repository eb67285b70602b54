#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ugc/archspace.hpp"
#include "ugc/config.hpp"

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest_compat.hpp"

using namespace ugc;
namespace fs = std::filesystem;

// These tests drive the installed binary the way a user would: through its
// command line, checking exit codes and the files it leaves behind.

namespace {

std::string binary() {
  const char* b = std::getenv("UGC_BIN");
  REQUIRE_MESSAGE(b != nullptr, "UGC_BIN must point at the built binary");
  return b;
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Runs one invocation, captures combined output, returns the exit code.
int run_cli(const std::string& args, std::string* output = nullptr) {
  fs::path log = fs::temp_directory_path() / "ugc_cli_out.txt";
  std::string cmd = binary() + " " + args + " > " + log.string() + " 2>&1";
  int status = std::system(cmd.c_str());
  if (output) {
    std::ifstream f(log);
    output->assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  }
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string file_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

RunConfig tiny_config(const fs::path& data, const fs::path& out) {
  RunConfig cfg;
  cfg.seed = 9;
  cfg.out_dir = out.string();
  cfg.dataset.root = data.string();
  cfg.dataset.fraction = 0.5;
  cfg.dataset.eval_count = 2;
  cfg.spec.image_size = 32;
  cfg.spec.n_stages = 1;
  cfg.spec.width_choices = {8, 16};
  cfg.spec.depth_choices = {0, 1};
  cfg.spec.max_extra_blocks_per_site = 1;
  cfg.stage1.total_steps = 4;
  cfg.stage1.batch_size_labeled = 2;
  cfg.stage1.batch_size_unlabeled = 2;
  cfg.stage1.log_interval = 1;
  cfg.stage1.checkpoint_interval = 2;
  cfg.evo.population_size = 8;
  cfg.evo.generations = 2;
  cfg.evo.fitness = "l1";
  cfg.evo.fitness_images = 2;
  // Any budget at or above the cheapest network keeps the search feasible.
  cfg.evo.student_budget_macs =
      count_macs(sample_smallest(cfg.spec), cfg.spec, cfg.spec.image_size).macs;
  cfg.stage2.total_steps = 4;
  cfg.stage2.teacher_update_interval = 2;
  cfg.stage2.batch_size_labeled = 2;
  cfg.stage2.batch_size_unlabeled = 2;
  cfg.stage2.log_interval = 1;
  cfg.stage2.checkpoint_interval = 2;
  return cfg;
}

}  // namespace

TEST_CASE("cli: --help succeeds, bad usage exits 2") {
  std::string out;
  CHECK(run_cli("--help", &out) == 0);
  CHECK(out.find("synth-data") != std::string::npos);

  CHECK(run_cli("synth-data --help", &out) == 0);

  // Required flag missing.
  CHECK(run_cli("synth-data --n 4", &out) == 2);
  CHECK(out.find("--out") != std::string::npos);

  // Unknown subcommand.
  CHECK(run_cli("frobnicate", &out) == 2);
}

TEST_CASE("cli: synth-data writes a corpus and is reproducible byte for byte") {
  fs::path a = fresh_dir("ugc_cli_synth_a");
  fs::path b = fresh_dir("ugc_cli_synth_b");

  CHECK(run_cli("synth-data --n 6 --size 32 --seed 5 --out " + a.string()) == 0);
  CHECK(run_cli("synth-data --n 6 --size 32 --seed 5 --out " + b.string()) == 0);

  std::vector<fs::path> files_a;
  for (const auto& entry : fs::recursive_directory_iterator(a))
    if (entry.is_regular_file()) files_a.push_back(entry.path());
  REQUIRE(!files_a.empty());
  for (const fs::path& fa : files_a) {
    fs::path fb = b / fs::relative(fa, a);
    REQUIRE(fs::exists(fb));
    CHECK(file_bytes(fa) == file_bytes(fb));
  }

  // A different seed produces a different corpus.
  fs::path c = fresh_dir("ugc_cli_synth_c");
  CHECK(run_cli("synth-data --n 6 --size 32 --seed 6 --out " + c.string()) == 0);
  bool any_diff = false;
  for (const fs::path& fa : files_a) {
    fs::path fc = c / fs::relative(fa, a);
    if (!fs::exists(fc) || file_bytes(fa) != file_bytes(fc)) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("cli: stages refuse to run without their upstream artifacts") {
  fs::path data = fresh_dir("ugc_cli_missing_data");
  fs::path out = fresh_dir("ugc_cli_missing_run");
  CHECK(run_cli("synth-data --n 6 --size 32 --seed 5 --out " + data.string()) == 0);

  fs::path cfg_path = out / "config.json";
  save_config(cfg_path.string(), tiny_config(data, out));

  std::string out_text;
  CHECK(run_cli("search --config " + cfg_path.string(), &out_text) == 1);
  CHECK(out_text.find("required artifact missing") != std::string::npos);
  CHECK(out_text.find("stage1") != std::string::npos);

  CHECK(run_cli("stage2 --config " + cfg_path.string(), &out_text) == 1);
  CHECK(out_text.find("required artifact missing") != std::string::npos);

  // Missing or malformed config files are runtime errors, not crashes.
  CHECK(run_cli("stage1 --config " + (out / "nope.json").string(), &out_text) == 1);
  CHECK(out_text.find("error:") != std::string::npos);
  std::ofstream(out / "broken.json") << "not json {";
  CHECK(run_cli("stage1 --config " + (out / "broken.json").string(), &out_text) == 1);
  CHECK(out_text.find("error:") != std::string::npos);

  CHECK(run_cli("report --run-dir " + out.string(), &out_text) == 1);
  CHECK(out_text.find("no evaluation records") != std::string::npos);
}

TEST_CASE("cli: a config file may list only the keys it changes") {
  fs::path data = fresh_dir("ugc_cli_partial_data");
  fs::path out = fresh_dir("ugc_cli_partial_run");
  CHECK(run_cli("synth-data --n 6 --size 32 --seed 5 --out " + data.string()) == 0);

  // A hand-written config that sets a handful of keys; every omitted key
  // (learning rate, label fraction, intervals, ...) keeps its default.
  nlohmann::json sparse = {
      {"run", {{"seed", 3}, {"out_dir", out.string()}}},
      {"dataset", {{"root", data.string()}, {"eval_count", 2}}},
      {"spec",
       {{"image_size", 32},
        {"n_stages", 1},
        {"width_choices", {8, 16}},
        {"depth_choices", {0, 1}},
        {"max_extra_blocks_per_site", 1}}},
      {"stage1",
       {{"total_steps", 2}, {"batch_size_labeled", 2}, {"batch_size_unlabeled", 2}}}};
  fs::path cfg_path = out / "config.json";
  std::ofstream(cfg_path) << sparse.dump(2) << "\n";

  std::string out_text;
  REQUIRE(run_cli("stage1 --config " + cfg_path.string(), &out_text) == 0);
  CHECK(fs::exists(out / "stage1.ckpt"));
}

TEST_CASE("cli: the full pipeline runs end to end on a toy corpus") {
  fs::path data = fresh_dir("ugc_cli_pipe_data");
  fs::path out = fresh_dir("ugc_cli_pipe_run");
  CHECK(run_cli("synth-data --n 12 --size 32 --seed 5 --out " + data.string()) == 0);

  RunConfig cfg = tiny_config(data, out);
  fs::path cfg_path = out / "config.json";
  save_config(cfg_path.string(), cfg);

  std::string out_text;
  REQUIRE(run_cli("stage1 --config " + cfg_path.string(), &out_text) == 0);
  CHECK(fs::exists(out / "stage1.ckpt"));
  CHECK(fs::exists(out / "stage1_log.jsonl"));

  REQUIRE(run_cli("search --config " + cfg_path.string(), &out_text) == 0);
  REQUIRE(fs::exists(out / "search.json"));
  nlohmann::json search = nlohmann::json::parse(std::ifstream(out / "search.json"));
  CHECK(search.at("student").at("macs").get<int64_t>() <=
        search.at("budget_max_macs").get<int64_t>());
  CHECK(search.at("teacher_deeper").contains("code"));
  CHECK(search.at("teacher_wider").contains("macs_ratio"));
  CHECK(search.at("history").at("best_fitness").size() ==
        static_cast<size_t>(cfg.evo.generations + 1));
  // This search space is too small to hold a 15-25x teacher, so the window
  // must clamp (and say so) rather than fail.
  CHECK(search.at("window_clamped").get<bool>());

  REQUIRE(run_cli("stage2 --config " + cfg_path.string(), &out_text) == 0);
  CHECK(fs::exists(out / "stage2_student.ckpt"));
  CHECK(fs::exists(out / "stage2_log.jsonl"));
  CHECK(fs::exists(out / "eval_stage2_student.json"));

  // Standalone evaluation of both snapshots.
  REQUIRE(run_cli("eval --checkpoint " + (out / "stage2_student.ckpt").string() + " --data " +
                      data.string() + " --eval-count 2 --name student_again",
                  &out_text) == 0);
  CHECK(fs::exists(out / "eval_student_again.json"));

  REQUIRE(run_cli("eval --checkpoint " + (out / "stage1.ckpt").string() + " --data " +
                      data.string() + " --eval-count 2 --arch smallest",
                  &out_text) == 0);
  CHECK(fs::exists(out / "eval_stage1.json"));

  // The run report turns the accumulated index into labeled plots.
  REQUIRE(run_cli("report --run-dir " + out.string(), &out_text) == 0);
  REQUIRE(fs::exists(out / "macs_vs_l1.svg"));
  std::string svg = file_bytes(out / "macs_vs_l1.svg");
  CHECK(svg.find("stage2_student") != std::string::npos);
  CHECK(svg.find("student_again") != std::string::npos);

  // Evaluation rows carry the metrics the pipeline promises.
  nlohmann::json eval = nlohmann::json::parse(std::ifstream(out / "eval_stage2_student.json"));
  for (const char* key : {"l1", "ssim", "fid", "macs", "params", "compression_ratio_macs"})
    CHECK(eval.contains(key));
}

TEST_CASE("cli: an unmeetable compute budget fails with a clear message") {
  fs::path data = fresh_dir("ugc_cli_bad_data");
  fs::path out = fresh_dir("ugc_cli_bad_run");
  CHECK(run_cli("synth-data --n 6 --size 32 --seed 5 --out " + data.string()) == 0);

  RunConfig cfg = tiny_config(data, out);
  cfg.stage1.total_steps = 2;
  fs::path cfg_path = out / "config.json";
  save_config(cfg_path.string(), cfg);
  std::string out_text;
  REQUIRE(run_cli("stage1 --config " + cfg_path.string(), &out_text) == 0);

  cfg.evo.student_budget_macs = 1;  // nothing fits in one multiply
  save_config(cfg_path.string(), cfg);
  CHECK(run_cli("search --config " + cfg_path.string(), &out_text) == 1);
  CHECK(out_text.find("error:") != std::string::npos);
}
