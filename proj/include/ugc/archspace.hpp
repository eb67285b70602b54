#ifndef UGC_ARCHSPACE_HPP
#define UGC_ARCHSPACE_HPP

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ugc/rng.hpp"

namespace ugc {

enum class Topology { kResnetStyle, kUnetStyle };

std::string to_string(Topology t);
Topology topology_from_string(const std::string& s);

/// Describes the depth/width-dynamic search space: the base generator
/// topology plus the per-layer channel choices and per-site block-count
/// choices a sub-network may take.
struct SearchSpaceSpec {
  Topology base_topology = Topology::kResnetStyle;
  int64_t in_channels = 3;
  int64_t out_channels = 3;
  int64_t image_size = 64;
  int64_t n_stages = 2;  // number of downsample layers (== number of upsample layers)
  std::vector<int64_t> width_choices = {8, 16, 24, 32, 40, 48, 56, 64};
  std::vector<int64_t> depth_choices = {0, 1, 2};
  int64_t max_extra_blocks_per_site = 3;

  // Width sites: one per down conv, one per up conv, one per block-insertion
  // site. Depth sites: one per insertion site (after every up/down layer).
  int64_t n_width_sites() const { return 4 * n_stages; }
  int64_t n_depth_sites() const { return 2 * n_stages; }

  int64_t max_width() const { return width_choices.back(); }
  int64_t min_width() const { return width_choices.front(); }
  int64_t max_depth() const { return depth_choices.back(); }
  int64_t min_depth() const { return depth_choices.front(); }

  /// Throws std::invalid_argument if any structural invariant is violated.
  void validate() const;
};

/// A concrete sub-network: per-layer channel widths and per-site active
/// block counts. Only meaningful relative to the SearchSpaceSpec that
/// defines the layer layout.
///
/// Width order: [down_0 .. down_{n-1}, up_0 .. up_{n-1},
///               site_0 .. site_{2n-1}] where site_i (i < n) follows
/// down_i and site_{n+i} follows up_i. Depth order matches the sites.
struct ArchCode {
  std::vector<int64_t> widths;
  std::vector<int64_t> depths;

  bool operator==(const ArchCode& other) const = default;
  std::string key() const;  // compact canonical string, usable as a map key
};

struct CostReport {
  int64_t macs = 0;
  int64_t params = 0;
};

enum class ArchError { kOk, kDimensionMismatch, kOutOfChoice };

/// Checks that the code's lengths match the spec's layout and every entry
/// lies in the corresponding choice list.
ArchError validate_arch(const ArchCode& code, const SearchSpaceSpec& spec);

/// validate_arch that throws std::invalid_argument on failure.
void require_valid(const ArchCode& code, const SearchSpaceSpec& spec);

ArchCode sample_largest(const SearchSpaceSpec& spec);
ArchCode sample_smallest(const SearchSpaceSpec& spec);
ArchCode sample_random(const SearchSpaceSpec& spec, Rng& rng);

/// One convolution (or transposed convolution) of the generator together
/// with everything needed to run, slice and cost it.
struct ConvUnit {
  std::string name;  // parameter base name; tensors are "<name>.weight"/".bias"
  bool transposed = false;
  int64_t in_ch = 0;
  int64_t out_ch = 0;
  int64_t kernel = 3;
  int64_t stride = 1;
  int64_t padding = 0;
  int64_t output_padding = 0;
  int64_t reflect_pad = 0;  // reflection padding applied before the conv
  bool norm = false;        // instance norm after the conv
  enum class Act { kNone, kRelu, kLeakyRelu, kTanh } act = Act::kNone;
  // Input-channel segments (for concatenated inputs). Sums to in_ch; the
  // matching max-plan segments locate each slice in the shared weight.
  std::vector<int64_t> in_segments;
  int64_t out_h = 0;  // output spatial size at the plan's resolution
  int64_t out_w = 0;
};

/// The generator unrolled for a specific (spec, code, resolution):
/// topology-aware structure for the forward pass plus a flat conv list for
/// analytic cost accounting.
struct GeneratorPlan {
  Topology topology;
  int64_t n_stages = 0;
  std::optional<ConvUnit> stem;  // resnet-style only
  std::vector<ConvUnit> downs;
  std::vector<std::vector<std::array<ConvUnit, 2>>> down_sites;  // [site][block] -> {conv1, conv2}
  std::vector<ConvUnit> ups;
  std::vector<std::vector<std::array<ConvUnit, 2>>> up_sites;
  ConvUnit head;

  std::vector<const ConvUnit*> all_convs() const;  // fixed traversal order
};

GeneratorPlan build_plan(const SearchSpaceSpec& spec, const ArchCode& code,
                         int64_t resolution);

/// Exact analytic MAC/parameter count for one sub-network. Convolutions
/// count in*out*k*k per output position; norms and activations count zero.
CostReport count_macs(const ArchCode& code, const SearchSpaceSpec& spec,
                      int64_t resolution);

using TensorMap = std::map<std::string, torch::Tensor>;

/// Runs a generator plan on an input batch with the given parameter map
/// (full-precision sliced views for the supernet, owned tensors for a
/// standalone generator).
torch::Tensor run_plan(const GeneratorPlan& plan, const TensorMap& params,
                       const torch::Tensor& x);

/// Weight-sharing supernet generator: every weight tensor is stored at
/// maximal width/depth and any valid ArchCode runs as a prefix-slice of it.
class SuperNet : public torch::nn::Module {
 public:
  SuperNet(SearchSpaceSpec spec, uint64_t init_seed);

  const SearchSpaceSpec& spec() const { return spec_; }

  /// First-k-channels / first-d-blocks views into the shared store.
  /// Gradients written through the views accumulate into the store.
  TensorMap slice(const ArchCode& code) const;

  torch::Tensor forward(const ArchCode& code, const torch::Tensor& x);

  TensorMap named_tensors() const;                // stable name -> parameter
  void load_tensors(const TensorMap& tensors);    // strict: names and shapes must match

 private:
  SearchSpaceSpec spec_;
  GeneratorPlan max_plan_;
  TensorMap params_;
};

/// Fixed-architecture 70x70 patch discriminator over the channel
/// concatenation of source and target; outputs per-patch probabilities.
class PatchDiscriminator : public torch::nn::Module {
 public:
  PatchDiscriminator(int64_t in_channels, int64_t ndf, uint64_t init_seed);

  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& y);

  TensorMap named_tensors() const;
  void load_tensors(const TensorMap& tensors);

 private:
  torch::nn::Sequential body_{nullptr};
};

/// Standalone generator with its own parameters sized exactly for one code.
/// Shares the forward path with the supernet, so a generator built from
/// sliced supernet weights reproduces the sliced forward bit-for-bit.
class StandaloneGenerator : public torch::nn::Module {
 public:
  StandaloneGenerator(SearchSpaceSpec spec, ArchCode code, uint64_t init_seed);

  static std::shared_ptr<StandaloneGenerator> from_supernet(const SuperNet& net,
                                                            const ArchCode& code);

  torch::Tensor forward(const torch::Tensor& x);

  const SearchSpaceSpec& spec() const { return spec_; }
  const ArchCode& code() const { return code_; }

  TensorMap named_tensors() const;
  void load_tensors(const TensorMap& tensors);

 private:
  SearchSpaceSpec spec_;
  ArchCode code_;
  GeneratorPlan plan_;
  TensorMap params_;
};

/// Full supernet training state: shared generator store, its discriminator
/// and the step counter. Single-writer; read-only ops are safe concurrently.
struct SuperNetState {
  std::shared_ptr<SuperNet> generator;
  std::shared_ptr<PatchDiscriminator> discriminator;
  int64_t step = 0;
};

SuperNetState make_supernet_state(const SearchSpaceSpec& spec, uint64_t global_seed);

/// Architecture description of the uncompressed full-size generator used as
/// the compression-ratio reference: the classic conditional-translation
/// generator (ngf 64; for the resnet topology a 9-block bottleneck trunk).
/// Expressed as a spec+code pair so the same accounting path costs it.
std::pair<SearchSpaceSpec, ArchCode> reference_fullsize(Topology topology,
                                                        int64_t n_stages,
                                                        int64_t image_size,
                                                        int64_t in_channels = 3,
                                                        int64_t out_channels = 3);

}  // namespace ugc

#endif
