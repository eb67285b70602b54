#include "ugc/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace ugc {

namespace {

// Format tag; bump when the layout changes so old readers refuse new files.
constexpr char kMagic[8] = {'U', 'G', 'C', 'K', 'P', 'T', '0', '1'};

void write_u64(std::ostream& os, uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(buf, 8);
}

uint64_t read_u64(std::istream& is) {
  char buf[8];
  is.read(buf, 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
  return v;
}

nlohmann::json tensor_directory(const TensorMap& tensors, uint64_t& offset) {
  nlohmann::json dir = nlohmann::json::array();
  for (const auto& [name, tensor] : tensors) {
    TORCH_CHECK(tensor.dtype() == torch::kFloat32, "checkpoint tensors must be float32: ", name);
    uint64_t bytes = static_cast<uint64_t>(tensor.numel()) * sizeof(float);
    dir.push_back({{"name", name},
                   {"shape", std::vector<int64_t>(tensor.sizes().begin(), tensor.sizes().end())},
                   {"offset", offset},
                   {"bytes", bytes}});
    offset += bytes;
  }
  return dir;
}

void write_tensor_data(std::ostream& os, const TensorMap& tensors) {
  for (const auto& [name, tensor] : tensors) {
    torch::Tensor t = tensor.detach().contiguous();
    os.write(reinterpret_cast<const char*>(t.data_ptr<float>()),
             static_cast<std::streamsize>(t.numel() * sizeof(float)));
  }
}

TensorMap read_tensor_directory(const nlohmann::json& dir, const std::vector<char>& data) {
  TensorMap out;
  for (const auto& entry : dir) {
    std::string name = entry.at("name").get<std::string>();
    std::vector<int64_t> shape = entry.at("shape").get<std::vector<int64_t>>();
    uint64_t offset = entry.at("offset").get<uint64_t>();
    uint64_t bytes = entry.at("bytes").get<uint64_t>();
    if (offset + bytes > data.size()) throw std::runtime_error("checkpoint: tensor data out of range");
    torch::Tensor t = torch::empty(shape, torch::kFloat32);
    if (static_cast<uint64_t>(t.numel()) * sizeof(float) != bytes)
      throw std::runtime_error("checkpoint: shape/bytes mismatch for " + name);
    std::memcpy(t.data_ptr<float>(), data.data() + offset, bytes);
    out[name] = t;
  }
  return out;
}

}  // namespace

nlohmann::json spec_to_json(const SearchSpaceSpec& spec) {
  return {{"topology", to_string(spec.base_topology)},
          {"in_channels", spec.in_channels},
          {"out_channels", spec.out_channels},
          {"image_size", spec.image_size},
          {"n_stages", spec.n_stages},
          {"width_choices", spec.width_choices},
          {"depth_choices", spec.depth_choices},
          {"max_extra_blocks_per_site", spec.max_extra_blocks_per_site}};
}

SearchSpaceSpec spec_from_json(const nlohmann::json& j) {
  SearchSpaceSpec spec;
  spec.base_topology = topology_from_string(j.at("topology").get<std::string>());
  spec.in_channels = j.at("in_channels").get<int64_t>();
  spec.out_channels = j.at("out_channels").get<int64_t>();
  spec.image_size = j.at("image_size").get<int64_t>();
  spec.n_stages = j.at("n_stages").get<int64_t>();
  spec.width_choices = j.at("width_choices").get<std::vector<int64_t>>();
  spec.depth_choices = j.at("depth_choices").get<std::vector<int64_t>>();
  spec.max_extra_blocks_per_site = j.at("max_extra_blocks_per_site").get<int64_t>();
  spec.validate();
  return spec;
}

nlohmann::json code_to_json(const ArchCode& code) {
  return {{"widths", code.widths}, {"depths", code.depths}};
}

ArchCode code_from_json(const nlohmann::json& j) {
  ArchCode code;
  code.widths = j.at("widths").get<std::vector<int64_t>>();
  code.depths = j.at("depths").get<std::vector<int64_t>>();
  return code;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  uint64_t offset = 0;
  nlohmann::json header = {{"version", 1},
                           {"step", ckpt.step},
                           {"spec", spec_to_json(ckpt.spec)},
                           {"generator", tensor_directory(ckpt.generator, offset)},
                           {"discriminator", tensor_directory(ckpt.discriminator, offset)}};
  if (ckpt.code) header["arch_code"] = code_to_json(*ckpt.code);
  std::string header_str = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  write_u64(os, header_str.size());
  os.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  write_tensor_data(os, ckpt.generator);
  write_tensor_data(os, ckpt.discriminator);
  if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: unrecognized or mismatched format version: " + path);
  uint64_t header_len = read_u64(is);
  std::string header_str(header_len, '\0');
  is.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (!is) throw std::runtime_error("checkpoint: truncated header: " + path);
  nlohmann::json header = nlohmann::json::parse(header_str);
  if (header.at("version").get<int64_t>() != 1)
    throw std::runtime_error("checkpoint: unsupported format version in " + path);

  std::vector<char> data((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());

  Checkpoint ckpt;
  ckpt.spec = spec_from_json(header.at("spec"));
  ckpt.step = header.at("step").get<int64_t>();
  if (header.contains("arch_code")) ckpt.code = code_from_json(header.at("arch_code"));
  ckpt.generator = read_tensor_directory(header.at("generator"), data);
  ckpt.discriminator = read_tensor_directory(header.at("discriminator"), data);
  return ckpt;
}

}  // namespace ugc
