#ifndef UGC_CHECKPOINT_HPP
#define UGC_CHECKPOINT_HPP

#include <optional>
#include <string>

#include <json.hpp>

#include "ugc/archspace.hpp"

namespace ugc {

/// On-disk training snapshot: the search-space description, the generator
/// and discriminator tensor maps and the step counter, under a versioned
/// binary format that round-trips bit-exactly.
struct Checkpoint {
  SearchSpaceSpec spec;
  std::optional<ArchCode> code;  // set for fixed-architecture (student) snapshots
  TensorMap generator;
  TensorMap discriminator;  // empty for discriminator-free snapshots
  int64_t step = 0;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

/// Loads a snapshot; throws std::runtime_error on a missing file, a foreign
/// file, or a format-version mismatch.
Checkpoint load_checkpoint(const std::string& path);

nlohmann::json spec_to_json(const SearchSpaceSpec& spec);
SearchSpaceSpec spec_from_json(const nlohmann::json& j);
nlohmann::json code_to_json(const ArchCode& code);
ArchCode code_from_json(const nlohmann::json& j);

}  // namespace ugc

#endif
