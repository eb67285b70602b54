#include "ugc/archspace.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace F = torch::nn::functional;

namespace ugc {

std::string to_string(Topology t) {
  return t == Topology::kResnetStyle ? "resnet" : "unet";
}

Topology topology_from_string(const std::string& s) {
  if (s == "resnet" || s == "resnet_style") return Topology::kResnetStyle;
  if (s == "unet" || s == "unet_style") return Topology::kUnetStyle;
  throw std::invalid_argument("unknown topology: " + s);
}

void SearchSpaceSpec::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("SearchSpaceSpec: " + msg); };
  if (in_channels < 1 || out_channels < 1) fail("channel counts must be positive");
  if (n_stages < 1) fail("n_stages must be >= 1");
  if (width_choices.empty()) fail("width_choices empty");
  for (size_t i = 0; i < width_choices.size(); ++i) {
    if (width_choices[i] <= 0) fail("width_choices must be positive");
    if (i > 0 && width_choices[i] <= width_choices[i - 1]) fail("width_choices must be strictly increasing");
  }
  if (depth_choices.empty()) fail("depth_choices empty");
  for (size_t i = 0; i < depth_choices.size(); ++i) {
    if (depth_choices[i] < 0) fail("depth_choices must be non-negative");
    if (i > 0 && depth_choices[i] <= depth_choices[i - 1]) fail("depth_choices must be strictly increasing");
  }
  if (depth_choices.back() > max_extra_blocks_per_site)
    fail("max depth choice exceeds the per-site block pool");
  int64_t factor = int64_t{1} << n_stages;
  if (image_size < factor || image_size % factor != 0)
    fail("image_size must be divisible by 2^n_stages");
}

std::string ArchCode::key() const {
  std::ostringstream os;
  os << "w";
  for (size_t i = 0; i < widths.size(); ++i) os << (i ? "," : "") << widths[i];
  os << "|d";
  for (size_t i = 0; i < depths.size(); ++i) os << (i ? "," : "") << depths[i];
  return os.str();
}

ArchError validate_arch(const ArchCode& code, const SearchSpaceSpec& spec) {
  if (static_cast<int64_t>(code.widths.size()) != spec.n_width_sites() ||
      static_cast<int64_t>(code.depths.size()) != spec.n_depth_sites())
    return ArchError::kDimensionMismatch;
  auto in = [](int64_t v, const std::vector<int64_t>& choices) {
    return std::find(choices.begin(), choices.end(), v) != choices.end();
  };
  for (int64_t w : code.widths)
    if (!in(w, spec.width_choices)) return ArchError::kOutOfChoice;
  for (int64_t d : code.depths)
    if (!in(d, spec.depth_choices)) return ArchError::kOutOfChoice;
  return ArchError::kOk;
}

void require_valid(const ArchCode& code, const SearchSpaceSpec& spec) {
  switch (validate_arch(code, spec)) {
    case ArchError::kOk:
      return;
    case ArchError::kDimensionMismatch:
      throw std::invalid_argument("ArchCode: dimension mismatch against spec layout");
    case ArchError::kOutOfChoice:
      throw std::invalid_argument("ArchCode: entry outside the spec's choice lists");
  }
}

ArchCode sample_largest(const SearchSpaceSpec& spec) {
  ArchCode code;
  code.widths.assign(static_cast<size_t>(spec.n_width_sites()), spec.max_width());
  code.depths.assign(static_cast<size_t>(spec.n_depth_sites()), spec.max_depth());
  return code;
}

ArchCode sample_smallest(const SearchSpaceSpec& spec) {
  ArchCode code;
  code.widths.assign(static_cast<size_t>(spec.n_width_sites()), spec.min_width());
  code.depths.assign(static_cast<size_t>(spec.n_depth_sites()), spec.min_depth());
  return code;
}

ArchCode sample_random(const SearchSpaceSpec& spec, Rng& rng) {
  ArchCode code;
  code.widths.reserve(static_cast<size_t>(spec.n_width_sites()));
  code.depths.reserve(static_cast<size_t>(spec.n_depth_sites()));
  for (int64_t i = 0; i < spec.n_width_sites(); ++i) code.widths.push_back(rng.choice(spec.width_choices));
  for (int64_t i = 0; i < spec.n_depth_sites(); ++i) code.depths.push_back(rng.choice(spec.depth_choices));
  return code;
}

namespace {

// Names the two convs of the b-th inserted block at a site.
std::array<ConvUnit, 2> make_block(const std::string& site_name, int64_t b, int64_t stage_ch,
                                   int64_t inner_ch, int64_t res) {
  ConvUnit c1;
  c1.name = site_name + ".b" + std::to_string(b) + ".c1";
  c1.in_ch = stage_ch;
  c1.out_ch = inner_ch;
  c1.kernel = 3;
  c1.stride = 1;
  c1.padding = 1;
  c1.norm = true;
  c1.act = ConvUnit::Act::kRelu;
  c1.in_segments = {stage_ch};
  c1.out_h = c1.out_w = res;
  ConvUnit c2 = c1;
  c2.name = site_name + ".b" + std::to_string(b) + ".c2";
  c2.in_ch = inner_ch;
  c2.out_ch = stage_ch;
  c2.act = ConvUnit::Act::kNone;
  c2.in_segments = {inner_ch};
  return {c1, c2};
}

std::vector<std::array<ConvUnit, 2>> make_site(const std::string& site_name, int64_t n_blocks,
                                               int64_t stage_ch, int64_t inner_ch, int64_t res) {
  std::vector<std::array<ConvUnit, 2>> blocks;
  for (int64_t b = 0; b < n_blocks; ++b)
    blocks.push_back(make_block(site_name, b, stage_ch, inner_ch, res));
  return blocks;
}

}  // namespace

GeneratorPlan build_plan(const SearchSpaceSpec& spec, const ArchCode& code, int64_t resolution) {
  const int64_t n = spec.n_stages;
  auto w_down = [&](int64_t i) { return code.widths[static_cast<size_t>(i)]; };
  auto w_up = [&](int64_t i) { return code.widths[static_cast<size_t>(n + i)]; };
  auto w_site = [&](int64_t j) { return code.widths[static_cast<size_t>(2 * n + j)]; };
  auto depth = [&](int64_t j) { return code.depths[static_cast<size_t>(j)]; };

  GeneratorPlan plan;
  plan.topology = spec.base_topology;
  plan.n_stages = n;

  if (spec.base_topology == Topology::kResnetStyle) {
    // Full-resolution stage width is set by the final upsample; the stem
    // and head trunk convs inherit it.
    const int64_t stage0 = w_up(n - 1);
    ConvUnit stem;
    stem.name = "stem";
    stem.in_ch = spec.in_channels;
    stem.out_ch = stage0;
    stem.kernel = 7;
    stem.reflect_pad = 3;
    stem.norm = true;
    stem.act = ConvUnit::Act::kRelu;
    stem.in_segments = {spec.in_channels};
    stem.out_h = stem.out_w = resolution;
    plan.stem = stem;

    int64_t cur = stage0;
    int64_t res = resolution;
    for (int64_t i = 0; i < n; ++i) {
      res /= 2;
      ConvUnit d;
      d.name = "down" + std::to_string(i);
      d.in_ch = cur;
      d.out_ch = w_down(i);
      d.kernel = 3;
      d.stride = 2;
      d.padding = 1;
      d.norm = true;
      d.act = ConvUnit::Act::kRelu;
      d.in_segments = {cur};
      d.out_h = d.out_w = res;
      plan.downs.push_back(d);
      cur = w_down(i);
      plan.down_sites.push_back(make_site("dsite" + std::to_string(i), depth(i), cur, w_site(i), res));
    }
    for (int64_t i = 0; i < n; ++i) {
      res *= 2;
      ConvUnit u;
      u.name = "up" + std::to_string(i);
      u.transposed = true;
      u.in_ch = cur;
      u.out_ch = w_up(i);
      u.kernel = 3;
      u.stride = 2;
      u.padding = 1;
      u.output_padding = 1;
      u.norm = true;
      u.act = ConvUnit::Act::kRelu;
      u.in_segments = {cur};
      u.out_h = u.out_w = res;
      plan.ups.push_back(u);
      cur = w_up(i);
      plan.up_sites.push_back(make_site("usite" + std::to_string(i), depth(n + i), cur, w_site(n + i), res));
    }
    ConvUnit head;
    head.name = "head";
    head.in_ch = cur;
    head.out_ch = spec.out_channels;
    head.kernel = 7;
    head.reflect_pad = 3;
    head.norm = false;
    head.act = ConvUnit::Act::kTanh;
    head.in_segments = {cur};
    head.out_h = head.out_w = resolution;
    plan.head = head;
  } else {
    int64_t cur = spec.in_channels;
    int64_t res = resolution;
    for (int64_t i = 0; i < n; ++i) {
      res /= 2;
      ConvUnit d;
      d.name = "down" + std::to_string(i);
      d.in_ch = cur;
      d.out_ch = w_down(i);
      d.kernel = 4;
      d.stride = 2;
      d.padding = 1;
      d.norm = i > 0;  // no norm on the first encoder conv
      d.act = ConvUnit::Act::kLeakyRelu;
      d.in_segments = {cur};
      d.out_h = d.out_w = res;
      plan.downs.push_back(d);
      cur = w_down(i);
      plan.down_sites.push_back(make_site("dsite" + std::to_string(i), depth(i), cur, w_site(i), res));
    }
    for (int64_t i = 0; i < n; ++i) {
      res *= 2;
      ConvUnit u;
      u.name = "up" + std::to_string(i);
      u.transposed = true;
      u.kernel = 4;
      u.stride = 2;
      u.padding = 1;
      u.norm = true;
      u.act = ConvUnit::Act::kRelu;
      // Skip concatenation: both the decoder path and the mirrored encoder
      // feature are sliced to the code's widths.
      if (i == 0) {
        u.in_segments = {w_down(n - 1)};
      } else {
        u.in_segments = {w_up(i - 1), w_down(n - 1 - i)};
      }
      u.in_ch = std::accumulate(u.in_segments.begin(), u.in_segments.end(), int64_t{0});
      u.out_ch = w_up(i);
      u.out_h = u.out_w = res;
      plan.ups.push_back(u);
      plan.up_sites.push_back(make_site("usite" + std::to_string(i), depth(n + i), w_up(i), w_site(n + i), res));
    }
    ConvUnit head;
    head.name = "head";
    head.in_ch = w_up(n - 1);
    head.out_ch = spec.out_channels;
    head.kernel = 7;
    head.reflect_pad = 3;
    head.norm = false;
    head.act = ConvUnit::Act::kTanh;
    head.in_segments = {w_up(n - 1)};
    head.out_h = head.out_w = resolution;
    plan.head = head;
  }
  return plan;
}

std::vector<const ConvUnit*> GeneratorPlan::all_convs() const {
  std::vector<const ConvUnit*> out;
  if (stem) out.push_back(&*stem);
  for (size_t i = 0; i < downs.size(); ++i) {
    out.push_back(&downs[i]);
    for (const auto& block : down_sites[i]) {
      out.push_back(&block[0]);
      out.push_back(&block[1]);
    }
  }
  for (size_t i = 0; i < ups.size(); ++i) {
    out.push_back(&ups[i]);
    for (const auto& block : up_sites[i]) {
      out.push_back(&block[0]);
      out.push_back(&block[1]);
    }
  }
  out.push_back(&head);
  return out;
}

CostReport count_macs(const ArchCode& code, const SearchSpaceSpec& spec, int64_t resolution) {
  require_valid(code, spec);
  int64_t factor = int64_t{1} << spec.n_stages;
  if (resolution < factor || resolution % factor != 0)
    throw std::invalid_argument("count_macs: resolution incompatible with spec's stage count");
  GeneratorPlan plan = build_plan(spec, code, resolution);
  CostReport report;
  for (const ConvUnit* u : plan.all_convs()) {
    report.macs += u->in_ch * u->out_ch * u->kernel * u->kernel * u->out_h * u->out_w;
    report.params += u->in_ch * u->out_ch * u->kernel * u->kernel + u->out_ch;
  }
  return report;
}

namespace {

torch::Tensor apply_conv(const ConvUnit& u, const TensorMap& params, torch::Tensor h) {
  if (u.reflect_pad > 0) {
    int64_t p = u.reflect_pad;
    h = F::pad(h, F::PadFuncOptions({p, p, p, p}).mode(torch::kReflect));
  }
  const torch::Tensor& w = params.at(u.name + ".weight");
  const torch::Tensor& b = params.at(u.name + ".bias");
  if (u.transposed) {
    h = F::conv_transpose2d(h, w, F::ConvTranspose2dFuncOptions()
                                      .bias(b)
                                      .stride(u.stride)
                                      .padding(u.padding)
                                      .output_padding(u.output_padding));
  } else {
    h = F::conv2d(h, w, F::Conv2dFuncOptions().bias(b).stride(u.stride).padding(u.padding));
  }
  if (u.norm) h = F::instance_norm(h, F::InstanceNormFuncOptions().use_input_stats(true).eps(1e-5));
  switch (u.act) {
    case ConvUnit::Act::kNone: break;
    case ConvUnit::Act::kRelu: h = torch::relu(h); break;
    case ConvUnit::Act::kLeakyRelu: h = torch::leaky_relu(h, 0.2); break;
    case ConvUnit::Act::kTanh: h = torch::tanh(h); break;
  }
  return h;
}

torch::Tensor apply_site(const std::vector<std::array<ConvUnit, 2>>& blocks, const TensorMap& params,
                         torch::Tensor h) {
  for (const auto& block : blocks) {
    torch::Tensor r = apply_conv(block[0], params, h);
    r = apply_conv(block[1], params, r);
    h = h + r;  // inactive blocks simply do not appear in the plan
  }
  return h;
}

}  // namespace

torch::Tensor run_plan(const GeneratorPlan& plan, const TensorMap& params, const torch::Tensor& x) {
  TORCH_CHECK(x.dim() == 4, "generator input must be a NCHW batch");
  torch::Tensor h = x;
  if (plan.topology == Topology::kResnetStyle) {
    h = apply_conv(*plan.stem, params, h);
    for (size_t i = 0; i < plan.downs.size(); ++i) {
      h = apply_conv(plan.downs[i], params, h);
      h = apply_site(plan.down_sites[i], params, h);
    }
    for (size_t i = 0; i < plan.ups.size(); ++i) {
      h = apply_conv(plan.ups[i], params, h);
      h = apply_site(plan.up_sites[i], params, h);
    }
    return apply_conv(plan.head, params, h);
  }
  std::vector<torch::Tensor> skips;
  for (size_t i = 0; i < plan.downs.size(); ++i) {
    h = apply_conv(plan.downs[i], params, h);
    h = apply_site(plan.down_sites[i], params, h);
    skips.push_back(h);
  }
  const size_t n = plan.ups.size();
  for (size_t i = 0; i < n; ++i) {
    h = apply_conv(plan.ups[i], params, h);
    h = apply_site(plan.up_sites[i], params, h);
    if (i + 1 < n) h = torch::cat({h, skips[n - 2 - i]}, 1);
  }
  return apply_conv(plan.head, params, h);
}

namespace {

std::string sanitize_param_name(std::string name) {
  std::replace(name.begin(), name.end(), '.', '/');
  return name;
}

// The shared store carries the whole per-site block pool at maximal width,
// even when the depth choices never activate the last pool entries.
ArchCode store_code(const SearchSpaceSpec& spec) {
  ArchCode code = sample_largest(spec);
  code.depths.assign(code.depths.size(), spec.max_extra_blocks_per_site);
  return code;
}

void init_conv_params(TensorMap& params, const GeneratorPlan& plan, torch::Generator& gen) {
  for (const ConvUnit* u : plan.all_convs()) {
    torch::Tensor w = u->transposed ? torch::empty({u->in_ch, u->out_ch, u->kernel, u->kernel})
                                    : torch::empty({u->out_ch, u->in_ch, u->kernel, u->kernel});
    w.normal_(0.0, 0.02, gen);
    params[u->name + ".weight"] = w;
    params[u->name + ".bias"] = torch::zeros({u->out_ch});
  }
}

}  // namespace

SuperNet::SuperNet(SearchSpaceSpec spec, uint64_t init_seed) : spec_(std::move(spec)) {
  spec_.validate();
  max_plan_ = build_plan(spec_, store_code(spec_), spec_.image_size);
  torch::Generator gen = at::detail::createCPUGenerator(init_seed);
  init_conv_params(params_, max_plan_, gen);
  for (auto& [name, tensor] : params_)
    tensor = register_parameter(sanitize_param_name(name), tensor);
}

TensorMap SuperNet::slice(const ArchCode& code) const {
  require_valid(code, spec_);
  GeneratorPlan plan = build_plan(spec_, code, spec_.image_size);

  std::map<std::string, const ConvUnit*> max_units;
  for (const ConvUnit* u : max_plan_.all_convs()) max_units[u->name] = u;

  TensorMap sliced;
  for (const ConvUnit* u : plan.all_convs()) {
    const ConvUnit* m = max_units.at(u->name);
    const torch::Tensor& w_full = params_.at(u->name + ".weight");
    const int64_t dim_out = u->transposed ? 1 : 0;
    const int64_t dim_in = 1 - dim_out;
    torch::Tensor w = w_full.narrow(dim_out, 0, u->out_ch);
    if (u->in_segments.size() == 1) {
      w = w.narrow(dim_in, 0, u->in_segments[0]);
    } else {
      // Concatenated inputs: take the first-k channels of each segment of
      // the full-width input axis.
      std::vector<torch::Tensor> pieces;
      int64_t offset = 0;
      for (size_t s = 0; s < u->in_segments.size(); ++s) {
        pieces.push_back(w.narrow(dim_in, offset, u->in_segments[s]));
        offset += m->in_segments[s];
      }
      w = torch::cat(pieces, dim_in);
    }
    sliced[u->name + ".weight"] = w;
    sliced[u->name + ".bias"] = params_.at(u->name + ".bias").narrow(0, 0, u->out_ch);
  }
  return sliced;
}

torch::Tensor SuperNet::forward(const ArchCode& code, const torch::Tensor& x) {
  TORCH_CHECK(x.dim() == 4 && x.size(1) == spec_.in_channels,
              "supernet input must be NCHW with ", spec_.in_channels, " channels");
  int64_t factor = int64_t{1} << spec_.n_stages;
  TORCH_CHECK(x.size(2) % factor == 0 && x.size(3) % factor == 0,
              "input spatial dims must be divisible by 2^n_stages");
  GeneratorPlan plan = build_plan(spec_, code, spec_.image_size);
  return run_plan(plan, slice(code), x);
}

TensorMap SuperNet::named_tensors() const { return params_; }

void SuperNet::load_tensors(const TensorMap& tensors) {
  torch::NoGradGuard guard;
  for (auto& [name, tensor] : params_) {
    auto it = tensors.find(name);
    TORCH_CHECK(it != tensors.end(), "missing tensor in load: ", name);
    TORCH_CHECK(it->second.sizes() == tensor.sizes(), "shape mismatch loading ", name);
    tensor.copy_(it->second);
  }
}

PatchDiscriminator::PatchDiscriminator(int64_t in_channels, int64_t ndf, uint64_t init_seed) {
  using namespace torch::nn;
  auto in_norm = [](int64_t ch) {
    return InstanceNorm2d(InstanceNorm2dOptions(ch).affine(false).track_running_stats(false));
  };
  torch::nn::Sequential body;
  body->push_back(Conv2d(Conv2dOptions(in_channels, ndf, 4).stride(2).padding(1)));
  body->push_back(LeakyReLU(LeakyReLUOptions().negative_slope(0.2)));
  body->push_back(Conv2d(Conv2dOptions(ndf, ndf * 2, 4).stride(2).padding(1)));
  body->push_back(in_norm(ndf * 2));
  body->push_back(LeakyReLU(LeakyReLUOptions().negative_slope(0.2)));
  body->push_back(Conv2d(Conv2dOptions(ndf * 2, ndf * 4, 4).stride(2).padding(1)));
  body->push_back(in_norm(ndf * 4));
  body->push_back(LeakyReLU(LeakyReLUOptions().negative_slope(0.2)));
  body->push_back(Conv2d(Conv2dOptions(ndf * 4, ndf * 8, 4).stride(1).padding(1)));
  body->push_back(in_norm(ndf * 8));
  body->push_back(LeakyReLU(LeakyReLUOptions().negative_slope(0.2)));
  body->push_back(Conv2d(Conv2dOptions(ndf * 8, 1, 4).stride(1).padding(1)));
  body->push_back(Sigmoid());
  body_ = register_module("body", body);

  torch::NoGradGuard guard;
  torch::Generator gen = at::detail::createCPUGenerator(init_seed);
  for (auto& p : body_->named_parameters()) {
    if (p.value().dim() == 4)
      p.value().normal_(0.0, 0.02, gen);
    else
      p.value().zero_();
  }
}

torch::Tensor PatchDiscriminator::forward(const torch::Tensor& x, const torch::Tensor& y) {
  TORCH_CHECK(x.dim() == 4 && y.dim() == 4 && x.size(0) == y.size(0) &&
                  x.size(2) == y.size(2) && x.size(3) == y.size(3),
              "discriminator expects aligned source/target batches");
  return body_->forward(torch::cat({x, y}, 1));
}

TensorMap PatchDiscriminator::named_tensors() const {
  TensorMap out;
  for (const auto& p : const_cast<PatchDiscriminator*>(this)->named_parameters())
    out[p.key()] = p.value();
  return out;
}

void PatchDiscriminator::load_tensors(const TensorMap& tensors) {
  torch::NoGradGuard guard;
  for (auto& p : named_parameters()) {
    auto it = tensors.find(p.key());
    TORCH_CHECK(it != tensors.end(), "missing tensor in load: ", p.key());
    TORCH_CHECK(it->second.sizes() == p.value().sizes(), "shape mismatch loading ", p.key());
    p.value().copy_(it->second);
  }
}

StandaloneGenerator::StandaloneGenerator(SearchSpaceSpec spec, ArchCode code, uint64_t init_seed)
    : spec_(std::move(spec)), code_(std::move(code)) {
  spec_.validate();
  require_valid(code_, spec_);
  plan_ = build_plan(spec_, code_, spec_.image_size);
  torch::Generator gen = at::detail::createCPUGenerator(init_seed);
  init_conv_params(params_, plan_, gen);
  for (auto& [name, tensor] : params_)
    tensor = register_parameter(sanitize_param_name(name), tensor);
}

std::shared_ptr<StandaloneGenerator> StandaloneGenerator::from_supernet(const SuperNet& net,
                                                                        const ArchCode& code) {
  auto gen = std::make_shared<StandaloneGenerator>(net.spec(), code, /*init_seed=*/0);
  TensorMap cloned;
  for (const auto& [name, tensor] : net.slice(code)) cloned[name] = tensor.detach().clone();
  gen->load_tensors(cloned);
  return gen;
}

torch::Tensor StandaloneGenerator::forward(const torch::Tensor& x) {
  TORCH_CHECK(x.dim() == 4 && x.size(1) == spec_.in_channels,
              "generator input must be NCHW with ", spec_.in_channels, " channels");
  return run_plan(plan_, params_, x);
}

TensorMap StandaloneGenerator::named_tensors() const { return params_; }

void StandaloneGenerator::load_tensors(const TensorMap& tensors) {
  torch::NoGradGuard guard;
  for (auto& [name, tensor] : params_) {
    auto it = tensors.find(name);
    TORCH_CHECK(it != tensors.end(), "missing tensor in load: ", name);
    TORCH_CHECK(it->second.sizes() == tensor.sizes(), "shape mismatch loading ", name);
    tensor.copy_(it->second);
  }
}

SuperNetState make_supernet_state(const SearchSpaceSpec& spec, uint64_t global_seed) {
  SuperNetState state;
  state.generator = std::make_shared<SuperNet>(spec, substream_seed(global_seed, "init.generator"));
  state.discriminator = std::make_shared<PatchDiscriminator>(
      spec.in_channels + spec.out_channels, 64, substream_seed(global_seed, "init.discriminator"));
  state.step = 0;
  return state;
}

std::pair<SearchSpaceSpec, ArchCode> reference_fullsize(Topology topology, int64_t n_stages,
                                                        int64_t image_size, int64_t in_channels,
                                                        int64_t out_channels) {
  SearchSpaceSpec spec;
  spec.base_topology = topology;
  spec.in_channels = in_channels;
  spec.out_channels = out_channels;
  spec.image_size = image_size;
  spec.n_stages = n_stages;

  const int64_t n = n_stages;
  auto stage_width = [](int64_t i) { return std::min<int64_t>(64 << i, 512); };

  ArchCode code;
  code.widths.resize(static_cast<size_t>(4 * n));
  code.depths.assign(static_cast<size_t>(2 * n), 0);

  std::vector<int64_t> used;
  if (topology == Topology::kResnetStyle) {
    for (int64_t i = 0; i < n; ++i) code.widths[static_cast<size_t>(i)] = stage_width(i + 1);
    for (int64_t i = 0; i < n; ++i) code.widths[static_cast<size_t>(n + i)] = stage_width(n - 1 - i);
    for (int64_t j = 0; j < 2 * n; ++j) code.widths[static_cast<size_t>(2 * n + j)] = 64;
    // The original trunk: 9 residual blocks at the bottleneck, at full
    // bottleneck width.
    code.widths[static_cast<size_t>(2 * n + (n - 1))] = stage_width(n);
    code.depths[static_cast<size_t>(n - 1)] = 9;
    spec.depth_choices = {0, 9};
    spec.max_extra_blocks_per_site = 9;
  } else {
    for (int64_t i = 0; i < n; ++i) code.widths[static_cast<size_t>(i)] = stage_width(i);
    for (int64_t i = 0; i < n - 1; ++i)
      code.widths[static_cast<size_t>(n + i)] = stage_width(n - 2 - i);
    code.widths[static_cast<size_t>(n + n - 1)] = 64;
    for (int64_t j = 0; j < 2 * n; ++j) code.widths[static_cast<size_t>(2 * n + j)] = 64;
    spec.depth_choices = {0};
    spec.max_extra_blocks_per_site = 3;
  }
  used = code.widths;
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());
  spec.width_choices = used;
  spec.validate();
  require_valid(code, spec);
  return {spec, code};
}

}  // namespace ugc
