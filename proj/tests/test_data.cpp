#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>

#include "ugc/config.hpp"
#include "ugc/data.hpp"
#include "ugc/png_io.hpp"

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest_compat.hpp"

using namespace ugc;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> fake_ids(int n) {
  std::vector<std::string> ids;
  for (int i = 0; i < n; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06d", i);
    ids.emplace_back(buf);
  }
  return ids;
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("partition sizes, disjointness and coverage across many settings") {
  std::vector<std::string> ids = fake_ids(97);
  CHECK_THROWS_AS(partition(ids, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(partition(ids, 1.01, 1), std::invalid_argument);
  for (double fraction : {0.1, 0.25, 0.333, 0.5, 0.75, 0.9, 1.0}) {
    for (uint64_t seed : {1ULL, 2ULL, 3ULL, 40ULL, 500ULL}) {
      DatasetPartition p = partition(ids, fraction, seed);
      // Round-half-up labeled count.
      auto want = static_cast<int64_t>(std::floor(fraction * 97.0 + 0.5));
      CHECK(static_cast<int64_t>(p.labeled_ids.size()) == want);
      CHECK(p.labeled_ids.size() + p.unlabeled_ids.size() == ids.size());

      std::set<std::string> all(p.labeled_ids.begin(), p.labeled_ids.end());
      all.insert(p.unlabeled_ids.begin(), p.unlabeled_ids.end());
      CHECK(all.size() == ids.size());  // disjoint and covering
      CHECK(std::is_sorted(p.labeled_ids.begin(), p.labeled_ids.end()));
      CHECK(std::is_sorted(p.unlabeled_ids.begin(), p.unlabeled_ids.end()));
    }
  }
}

TEST_CASE("partition is deterministic in (ids, fraction, seed) and seed-sensitive") {
  std::vector<std::string> ids = fake_ids(50);
  DatasetPartition a = partition(ids, 0.25, 7);
  DatasetPartition b = partition(ids, 0.25, 7);
  CHECK(a.labeled_ids == b.labeled_ids);
  CHECK(a.unlabeled_ids == b.unlabeled_ids);

  // Input order must not matter: the ids are canonicalized first.
  std::vector<std::string> shuffled(ids.rbegin(), ids.rend());
  DatasetPartition c = partition(shuffled, 0.25, 7);
  CHECK(a.labeled_ids == c.labeled_ids);

  DatasetPartition d = partition(ids, 0.25, 8);
  CHECK(a.labeled_ids != d.labeled_ids);
}

TEST_CASE("png round-trip is lossless and float conversion is faithful") {
  fs::path dir = fresh_dir("ugc_test_png");
  const int64_t hw = 13;
  torch::manual_seed(5);
  torch::Tensor pixels = torch::randint(0, 256, {hw, hw, 3}, torch::kUInt8);

  fs::path p = dir / "img.png";
  write_png_rgb8(p.string(), pixels);
  torch::Tensor back = read_png_rgb8(p.string());
  CHECK(back.sizes() == torch::IntArrayRef({hw, hw, 3}));
  CHECK(torch::equal(back, pixels));

  torch::Tensor f = to_float_chw(pixels);
  CHECK(f.sizes() == torch::IntArrayRef({3, hw, hw}));
  CHECK(f.min().item<float>() >= -1.0f);
  CHECK(f.max().item<float>() <= 1.0f);
  CHECK(torch::equal(to_u8_hwc(f), pixels));  // u8 -> float -> u8 must be exact

  CHECK_THROWS_AS(read_png_rgb8((dir / "missing.png").string()), std::runtime_error);
}

TEST_CASE("synthetic corpus is deterministic and seed-sensitive") {
  fs::path a = fresh_dir("ugc_test_synth_a");
  fs::path b = fresh_dir("ugc_test_synth_b");
  fs::path c = fresh_dir("ugc_test_synth_c");
  synth_generate(a.string(), 6, 32, 11);
  synth_generate(b.string(), 6, 32, 11);
  synth_generate(c.string(), 6, 32, 12);

  bool any_seed_diff = false;
  for (const std::string& id : list_ids(a.string())) {
    for (const char* split : {"source", "target"}) {
      fs::path rel = fs::path(split) / (id + ".png");
      CHECK(file_bytes(a / rel) == file_bytes(b / rel));
      if (file_bytes(a / rel) != file_bytes(c / rel)) any_seed_diff = true;
    }
  }
  CHECK(any_seed_diff);
  CHECK(list_ids(a.string()).size() == 6);
}

TEST_CASE("synthetic sources are binary outlines of the colored targets") {
  fs::path dir = fresh_dir("ugc_test_synth_props");
  synth_generate(dir.string(), 8, 32, 3);
  for (const std::string& id : list_ids(dir.string())) {
    torch::Tensor src = read_png_rgb8((dir / "source" / (id + ".png")).string());
    torch::Tensor tgt = read_png_rgb8((dir / "target" / (id + ".png")).string());
    REQUIRE(src.sizes() == torch::IntArrayRef({32, 32, 3}));
    REQUIRE(tgt.sizes() == torch::IntArrayRef({32, 32, 3}));

    // Outline image: every pixel pure black or pure white, some white.
    torch::Tensor is_white = (src == 255).all(-1);
    torch::Tensor is_black = (src == 0).all(-1);
    CHECK((is_white | is_black).all().item<bool>());
    int64_t whites = is_white.sum().item<int64_t>();
    CHECK(whites > 0);

    // Targets carry real colors (neither white outlines nor black
    // background), so the translation is not the identity.
    torch::Tensor t_white = (tgt == 255).all(-1);
    torch::Tensor t_black = (tgt == 0).all(-1);
    CHECK(!(t_white | t_black).all().item<bool>());

    // Every interior outline pixel sits on a region boundary: a colored
    // target pixel lies on or next to it.
    torch::Tensor colored = (tgt.to(torch::kInt64).sum(-1) > 0);
    auto wa = is_white.accessor<bool, 2>();
    auto ca = colored.accessor<bool, 2>();
    int touching = 0, total_checked = 0;
    for (int y = 1; y < 31; ++y)
      for (int x = 1; x < 31; ++x) {
        if (!wa[y][x]) continue;
        ++total_checked;
        bool near = false;
        for (auto [dy, dx] : {std::pair{0, 0}, {0, 1}, {0, -1}, {1, 0}, {-1, 0}})
          if (ca[y + dy][x + dx]) near = true;
        if (near) ++touching;
      }
    if (total_checked > 0) CHECK(touching == total_checked);
  }
}

TEST_CASE("manifest creation and reuse") {
  fs::path dir = fresh_dir("ugc_test_manifest");
  synth_generate(dir.string(), 10, 16, 2);

  DatasetPartition a = load_or_create_partition(dir.string(), 0.3, 5);
  CHECK(fs::exists(manifest_path(dir.string(), 0.3, 5)));
  DatasetPartition b = load_or_create_partition(dir.string(), 0.3, 5);
  CHECK(a.labeled_ids == b.labeled_ids);
  CHECK(a.unlabeled_ids == b.unlabeled_ids);
  CHECK(a.labeled_ids.size() == 3);

  // The file, not the RNG, is the source of truth once written.
  {
    std::ofstream f(manifest_path(dir.string(), 0.3, 5), std::ios::trunc);
    f << "000000\n000001\n000002\n000003\n";
  }
  DatasetPartition c = load_or_create_partition(dir.string(), 0.3, 5);
  CHECK(c.labeled_ids == std::vector<std::string>{"000000", "000001", "000002", "000003"});
  CHECK(c.unlabeled_ids.size() == 6);
}

TEST_CASE("prepare_splits holds out the trailing ids entirely") {
  fs::path dir = fresh_dir("ugc_test_splits");
  synth_generate(dir.string(), 12, 16, 2);
  DataSplits s = prepare_splits(dir.string(), 0.5, 3, 4);

  std::vector<std::string> all = list_ids(dir.string());
  CHECK(s.eval_ids == std::vector<std::string>(all.end() - 4, all.end()));
  CHECK(s.train.labeled_ids.size() + s.train.unlabeled_ids.size() == 8);
  for (const auto& id : s.eval_ids) {
    for (const auto& tid : s.train.labeled_ids) CHECK(tid != id);
    for (const auto& tid : s.train.unlabeled_ids) CHECK(tid != id);
  }

  std::vector<PairedSample> eval = load_eval_samples(dir.string(), s.eval_ids);
  CHECK(eval.size() == 4);
  for (const auto& smp : eval) {
    CHECK(smp.target.has_value());
    CHECK(smp.source.sizes() == torch::IntArrayRef({3, 16, 16}));
  }
}

TEST_CASE("batch loader visits every id exactly once per epoch") {
  fs::path dir = fresh_dir("ugc_test_loader");
  synth_generate(dir.string(), 10, 16, 4);
  DatasetPartition part = load_or_create_partition(dir.string(), 1.0, 1);
  REQUIRE(part.labeled_ids.size() == 10);

  BatchLoader loader(part, Split::kLabeled, 4, Rng(9));
  std::map<std::string, int> counts;
  for (int b = 0; b < 5; ++b) {  // 20 samples = exactly two epochs
    BatchLoader::Batch batch = loader.next();
    CHECK(batch.source.size(0) == 4);
    REQUIRE(batch.target.has_value());
    CHECK(batch.target->size(0) == 4);
    for (const auto& id : batch.ids) counts[id]++;
  }
  CHECK(counts.size() == 10);
  for (const auto& [id, n] : counts) CHECK(n == 2);
}

TEST_CASE("unlabeled batches carry no target") {
  fs::path dir = fresh_dir("ugc_test_loader_u");
  synth_generate(dir.string(), 8, 16, 4);
  DatasetPartition part = load_or_create_partition(dir.string(), 0.25, 1);
  BatchLoader loader(part, Split::kUnlabeled, 3, Rng(2));
  BatchLoader::Batch batch = loader.next();
  CHECK(!batch.target.has_value());
  CHECK(batch.source.size(0) == 3);
}

TEST_CASE("loader order is seed-deterministic and resumable") {
  fs::path dir = fresh_dir("ugc_test_loader_resume");
  synth_generate(dir.string(), 9, 16, 6);
  DatasetPartition part = load_or_create_partition(dir.string(), 1.0, 1);

  BatchLoader a(part, Split::kLabeled, 2, Rng(33));
  BatchLoader b(part, Split::kLabeled, 2, Rng(33));
  for (int i = 0; i < 7; ++i) CHECK(a.next().ids == b.next().ids);

  // Serialize mid-stream, keep drawing from the original, then replay from
  // the snapshot: the tail sequences must match.
  nlohmann::json snap = a.state();
  std::vector<std::vector<std::string>> want;
  for (int i = 0; i < 9; ++i) want.push_back(a.next().ids);

  BatchLoader c(part, Split::kLabeled, 2, Rng(0));  // wrong seed on purpose
  c.restore(snap);
  for (int i = 0; i < 9; ++i) CHECK(c.next().ids == want[static_cast<size_t>(i)]);
}

TEST_CASE("config survives a json round-trip") {
  RunConfig cfg;
  cfg.seed = 123;
  cfg.out_dir = "runs/x";
  cfg.dataset.fraction = 0.4;
  cfg.spec.width_choices = {8, 16, 24};
  cfg.spec.image_size = 32;
  cfg.stage1.total_steps = 77;
  cfg.stage1.weights.lambda_tv = 3e-5;
  cfg.evo.fitness = "l1";
  cfg.stage2.ema_decay = 0.95;

  RunConfig back = config_from_json(config_to_json(cfg));
  CHECK(back.seed == 123);
  CHECK(back.out_dir == "runs/x");
  CHECK(back.dataset.fraction == doctest::Approx(0.4));
  CHECK(back.spec.width_choices == std::vector<int64_t>{8, 16, 24});
  CHECK(back.stage1.total_steps == 77);
  CHECK(back.stage1.weights.lambda_tv == doctest::Approx(3e-5));
  CHECK(back.stage2.weights.lambda_tv == doctest::Approx(3e-5));  // shared weights block
  CHECK(back.evo.fitness == "l1");
  CHECK(back.stage2.ema_decay == doctest::Approx(0.95));
}

TEST_CASE("environment variables override config fields by section and key") {
  RunConfig cfg;
  nlohmann::json j = config_to_json(cfg);

  setenv("UGC_STAGE1_TOTAL_STEPS", "42", 1);
  setenv("UGC_DATASET_FRACTION", "0.125", 1);
  setenv("UGC_SPEC_WIDTH_CHOICES", "8,16,32", 1);
  setenv("UGC_STAGE2_PER_SAMPLE_GATING", "true", 1);
  setenv("UGC_RUN_OUT_DIR", "runs/override", 1);
  apply_env_overrides(j);
  unsetenv("UGC_STAGE1_TOTAL_STEPS");
  unsetenv("UGC_DATASET_FRACTION");
  unsetenv("UGC_SPEC_WIDTH_CHOICES");
  unsetenv("UGC_STAGE2_PER_SAMPLE_GATING");
  unsetenv("UGC_RUN_OUT_DIR");

  RunConfig back = config_from_json(j);
  CHECK(back.stage1.total_steps == 42);
  CHECK(back.dataset.fraction == doctest::Approx(0.125));
  CHECK(back.spec.width_choices == std::vector<int64_t>{8, 16, 32});
  CHECK(back.stage2.per_sample_gating == true);
  CHECK(back.out_dir == "runs/override");
  // Untouched fields keep their file values.
  CHECK(back.stage1.lr0 == doctest::Approx(cfg.stage1.lr0));
}

TEST_CASE("malformed environment overrides are rejected loudly") {
  RunConfig cfg;
  nlohmann::json j = config_to_json(cfg);
  setenv("UGC_STAGE1_TOTAL_STEPS", "not-a-number", 1);
  CHECK_THROWS(apply_env_overrides(j));
  unsetenv("UGC_STAGE1_TOTAL_STEPS");
}

TEST_CASE("config validation rejects broken values") {
  RunConfig bad;
  bad.dataset.fraction = 1.5;
  CHECK_THROWS_AS(config_from_json(config_to_json(bad)), std::invalid_argument);

  RunConfig bad2;
  bad2.stage1.total_steps = 0;
  CHECK_THROWS_AS(config_from_json(config_to_json(bad2)), std::invalid_argument);

  RunConfig bad3;
  bad3.stage2.ema_decay = 1.5;
  CHECK_THROWS_AS(config_from_json(config_to_json(bad3)), std::invalid_argument);

  RunConfig bad4;
  bad4.evo.fitness = "mystery";
  CHECK_THROWS_AS(config_from_json(config_to_json(bad4)), std::invalid_argument);
}
