#include "ugc/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "ugc/png_io.hpp"

namespace fs = std::filesystem;

namespace ugc {

DatasetPartition partition(const std::vector<std::string>& all_ids, double fraction, uint64_t seed) {
  if (all_ids.empty()) throw std::invalid_argument("partition: empty id list");
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw std::invalid_argument("partition: fraction must be in (0, 1]");

  const int64_t n = static_cast<int64_t>(all_ids.size());
  const int64_t m = static_cast<int64_t>(std::floor(fraction * static_cast<double>(n) + 0.5));

  std::vector<std::string> ids = all_ids;
  std::sort(ids.begin(), ids.end());  // canonical base order, independent of listing order

  Rng rng(substream_seed(seed, "data.partition"));
  std::vector<int64_t> perm = rng.permutation(n);

  DatasetPartition part;
  part.fraction = fraction;
  part.seed = seed;
  for (int64_t i = 0; i < n; ++i) {
    auto& bucket = i < m ? part.labeled_ids : part.unlabeled_ids;
    bucket.push_back(ids[static_cast<size_t>(perm[static_cast<size_t>(i)])]);
  }
  std::sort(part.labeled_ids.begin(), part.labeled_ids.end());
  std::sort(part.unlabeled_ids.begin(), part.unlabeled_ids.end());
  return part;
}

std::vector<std::string> list_ids(const std::string& root) {
  fs::path dir = fs::path(root) / "source";
  if (!fs::is_directory(dir)) throw std::runtime_error("dataset source directory missing: " + dir.string());
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".png") ids.push_back(entry.path().stem().string());
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::string manifest_path(const std::string& root, double fraction, uint64_t seed) {
  char frac[32];
  std::snprintf(frac, sizeof(frac), "%g", fraction);
  return (fs::path(root) / "splits" / (std::string(frac) + "_" + std::to_string(seed) + ".manifest"))
      .string();
}

DatasetPartition load_or_create_partition(const std::string& root, double fraction, uint64_t seed) {
  std::vector<std::string> ids = list_ids(root);
  std::string mpath = manifest_path(root, fraction, seed);

  if (fs::exists(mpath)) {
    std::ifstream is(mpath);
    std::vector<std::string> labeled;
    for (std::string line; std::getline(is, line);)
      if (!line.empty()) labeled.push_back(line);
    std::sort(labeled.begin(), labeled.end());

    DatasetPartition part;
    part.root = root;
    part.fraction = fraction;
    part.seed = seed;
    part.labeled_ids = labeled;
    std::set_difference(ids.begin(), ids.end(), labeled.begin(), labeled.end(),
                        std::back_inserter(part.unlabeled_ids));
    if (part.labeled_ids.size() + part.unlabeled_ids.size() != ids.size())
      throw std::runtime_error("manifest lists ids not present in the dataset: " + mpath);
    return part;
  }

  DatasetPartition part = partition(ids, fraction, seed);
  part.root = root;
  fs::create_directories(fs::path(mpath).parent_path());
  std::ofstream os(mpath);
  for (const std::string& id : part.labeled_ids) os << id << "\n";
  return part;
}

PairedSample load_sample(const std::string& root, const std::string& id, bool labeled) {
  PairedSample s;
  s.id = id;
  s.source = to_float_chw(read_png_rgb8((fs::path(root) / "source" / (id + ".png")).string()));
  if (labeled)
    s.target = to_float_chw(read_png_rgb8((fs::path(root) / "target" / (id + ".png")).string()));
  return s;
}

DataSplits prepare_splits(const std::string& root, double fraction, uint64_t split_seed,
                          int64_t eval_count) {
  std::vector<std::string> ids = list_ids(root);
  if (eval_count < 0 || eval_count >= static_cast<int64_t>(ids.size()))
    throw std::invalid_argument("prepare_splits: eval_count must leave training data");

  DataSplits splits;
  splits.eval_ids.assign(ids.end() - eval_count, ids.end());
  std::vector<std::string> train_ids(ids.begin(), ids.end() - eval_count);

  std::string mpath = manifest_path(root, fraction, split_seed);
  if (fs::exists(mpath)) {
    std::ifstream is(mpath);
    std::vector<std::string> labeled;
    for (std::string line; std::getline(is, line);)
      if (!line.empty()) labeled.push_back(line);
    std::sort(labeled.begin(), labeled.end());
    splits.train.root = root;
    splits.train.fraction = fraction;
    splits.train.seed = split_seed;
    splits.train.labeled_ids = labeled;
    std::set_difference(train_ids.begin(), train_ids.end(), labeled.begin(), labeled.end(),
                        std::back_inserter(splits.train.unlabeled_ids));
    if (splits.train.labeled_ids.size() + splits.train.unlabeled_ids.size() != train_ids.size())
      throw std::runtime_error("manifest does not match the training ids: " + mpath);
    return splits;
  }

  splits.train = partition(train_ids, fraction, split_seed);
  splits.train.root = root;
  fs::create_directories(fs::path(mpath).parent_path());
  std::ofstream os(mpath);
  for (const std::string& id : splits.train.labeled_ids) os << id << "\n";
  return splits;
}

std::vector<PairedSample> load_eval_samples(const std::string& root,
                                            const std::vector<std::string>& ids) {
  std::vector<PairedSample> out;
  out.reserve(ids.size());
  for (const std::string& id : ids) out.push_back(load_sample(root, id, /*labeled=*/true));
  return out;
}

namespace {

struct Shape {
  int kind;  // 0 ellipse, 1 rectangle
  double cx, cy, ax, ay;

  bool contains(int64_t x, int64_t y) const {
    double dx = (static_cast<double>(x) - cx) / ax;
    double dy = (static_cast<double>(y) - cy) / ay;
    if (kind == 0) return dx * dx + dy * dy <= 1.0;
    return std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
  }

  double area() const { return kind == 0 ? M_PI * ax * ay : 4.0 * ax * ay; }
};

// Fill colors are a fixed function of shape kind and size so the mapping
// from outline to filled rendering is learnable.
constexpr uint8_t kPalette[6][3] = {
    {230, 80, 80}, {80, 230, 80}, {80, 80, 230}, {230, 230, 80}, {230, 80, 230}, {80, 230, 230},
};

int palette_index(const Shape& s, int64_t resolution) {
  double rel = s.area() / static_cast<double>(resolution * resolution);
  int size_bucket = rel < 0.05 ? 0 : (rel < 0.12 ? 1 : 2);
  return s.kind * 3 + size_bucket;
}

}  // namespace

void synth_generate(const std::string& root, int64_t n, int64_t resolution, uint64_t seed) {
  if (n <= 0 || resolution < 8) throw std::invalid_argument("synth_generate: bad size arguments");
  fs::create_directories(fs::path(root) / "source");
  fs::create_directories(fs::path(root) / "target");

  const int64_t r = resolution;
  for (int64_t i = 0; i < n; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06lld", static_cast<long long>(i));
    std::string id(buf);
    Rng rng(substream_seed(seed, "synth." + id));

    int64_t n_shapes = rng.uniform_int(1, 3);
    std::vector<Shape> shapes;
    for (int64_t k = 0; k < n_shapes; ++k) {
      Shape s;
      s.kind = static_cast<int>(rng.uniform_int(0, 1));
      s.cx = static_cast<double>(rng.uniform_int(r / 4, 3 * r / 4));
      s.cy = static_cast<double>(rng.uniform_int(r / 4, 3 * r / 4));
      s.ax = static_cast<double>(rng.uniform_int(r / 8, r / 4));
      s.ay = static_cast<double>(rng.uniform_int(r / 8, r / 4));
      shapes.push_back(s);
    }

    // Painter's order: the later shape owns overlapping pixels.
    std::vector<int> owner(static_cast<size_t>(r * r), 0);
    for (int64_t y = 0; y < r; ++y)
      for (int64_t x = 0; x < r; ++x)
        for (size_t k = 0; k < shapes.size(); ++k)
          if (shapes[k].contains(x, y)) owner[static_cast<size_t>(y * r + x)] = static_cast<int>(k) + 1;

    torch::Tensor source = torch::zeros({r, r, 3}, torch::kUInt8);
    torch::Tensor target = torch::zeros({r, r, 3}, torch::kUInt8);
    auto src = source.accessor<uint8_t, 3>();
    auto tgt = target.accessor<uint8_t, 3>();
    auto own = [&](int64_t x, int64_t y) { return owner[static_cast<size_t>(y * r + x)]; };

    for (int64_t y = 0; y < r; ++y) {
      for (int64_t x = 0; x < r; ++x) {
        int id_here = own(x, y);
        bool edge = (x > 0 && own(x - 1, y) != id_here) || (x + 1 < r && own(x + 1, y) != id_here) ||
                    (y > 0 && own(x, y - 1) != id_here) || (y + 1 < r && own(x, y + 1) != id_here);
        if (edge)
          for (int c = 0; c < 3; ++c) src[y][x][c] = 255;
        if (id_here > 0) {
          const uint8_t* color = kPalette[palette_index(shapes[static_cast<size_t>(id_here - 1)], r)];
          for (int c = 0; c < 3; ++c) tgt[y][x][c] = color[c];
        }
      }
    }

    write_png_rgb8((fs::path(root) / "source" / (id + ".png")).string(), source);
    write_png_rgb8((fs::path(root) / "target" / (id + ".png")).string(), target);
  }
}

BatchLoader::BatchLoader(const DatasetPartition& part, Split split, int64_t batch_size, Rng rng)
    : root_(part.root),
      ids_(split == Split::kLabeled ? part.labeled_ids : part.unlabeled_ids),
      labeled_(split == Split::kLabeled),
      batch_size_(batch_size),
      rng_(std::move(rng)) {
  if (ids_.empty()) throw std::invalid_argument("BatchLoader: requested split is empty");
  TORCH_CHECK(batch_size_ > 0, "BatchLoader: batch_size must be positive");
  order_ = rng_.permutation(static_cast<int64_t>(ids_.size()));
}

const PairedSample& BatchLoader::sample(const std::string& id) {
  auto it = cache_.find(id);
  if (it == cache_.end()) it = cache_.emplace(id, load_sample(root_, id, labeled_)).first;
  return it->second;
}

BatchLoader::Batch BatchLoader::next() {
  Batch batch;
  std::vector<torch::Tensor> sources, targets;
  for (int64_t k = 0; k < batch_size_; ++k) {
    if (cursor_ >= order_.size()) {
      order_ = rng_.permutation(static_cast<int64_t>(ids_.size()));
      cursor_ = 0;
    }
    const std::string& id = ids_[static_cast<size_t>(order_[cursor_++])];
    const PairedSample& s = sample(id);
    sources.push_back(s.source);
    if (labeled_) targets.push_back(*s.target);
    batch.ids.push_back(id);
  }
  batch.source = torch::stack(sources);
  if (labeled_) batch.target = torch::stack(targets);
  return batch;
}

nlohmann::json BatchLoader::state() const {
  return {{"rng", rng_.serialize()}, {"order", order_}, {"cursor", cursor_}};
}

void BatchLoader::restore(const nlohmann::json& j) {
  rng_.deserialize(j.at("rng").get<std::string>());
  order_ = j.at("order").get<std::vector<int64_t>>();
  cursor_ = j.at("cursor").get<size_t>();
  TORCH_CHECK(order_.size() == ids_.size(), "BatchLoader state does not match the dataset");
}

}  // namespace ugc
