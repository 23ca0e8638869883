#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bgfg/pipeline.hpp"

namespace bgfg {

// Layout, all integers little-endian:
//   "BGFG" | u32 version | u32 n, n bytes of JSON metadata | u32 tensor count |
//   per tensor: u32 name length, name, u32 rank, rank x u64 dims, u8 dtype (1 = f64), payload
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    nlohmann::json metadata = nlohmann::json::object();
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor& tensor(const std::string& name) const;
};

/// Throws DataError on bad magic, unsupported version, truncation or trailing bytes.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

nlohmann::json to_json(const EncoderDecoderProfile& p);
nlohmann::json to_json(const McfcnProfile& p);
EncoderDecoderProfile encoder_decoder_profile_from_json(const nlohmann::json& j);
McfcnProfile mcfcn_profile_from_json(const nlohmann::json& j);

/// Profiles, normalisation, channel order and every parameter of both stages
/// plus the bridge coefficients.
Checkpoint model_checkpoint(const TwoStageModel& model, std::uint64_t seed, int step);
/// Rebuilds the networks from the recorded profiles and rejects any tensor
/// whose name or shape they do not declare, or a bridge that differs from the
/// fixed coefficients.
TwoStageModel model_from_checkpoint(const Checkpoint& ckpt);

void save_model(const std::string& path, const TwoStageModel& model, std::uint64_t seed, int step);
TwoStageModel load_model(const std::string& path);

}  // namespace bgfg
