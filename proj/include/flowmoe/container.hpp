#pragma once

#include "flowmoe/experts.hpp"
#include "flowmoe/gate.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace flowmoe {

/// Everything needed to run detection: normalization, both experts and
/// (after stage 2) the gate, plus the config text the model was trained with.
///
/// File layout: "FMOE", u32 container version, u32 section count, then per
/// section a 4-byte tag, u64 payload size and the payload. Tags: NORM,
/// AVGX, DEGX, GATE (u32 use_readout + model blob), CONF (utf-8 text).
struct ModelContainer {
    ExpertBundle experts;
    std::optional<GateModel> gate;  // absent in a stage-1 checkpoint
    std::string config_text;

    bool operator==(const ModelContainer&) const = default;
};

inline constexpr std::uint32_t kContainerVersion = 1;

void write_container(std::ostream& out, const ModelContainer& container);
ModelContainer read_container(std::istream& in);
std::string serialize_container(const ModelContainer& container);
ModelContainer deserialize_container(const std::string& bytes);
void save_container(const std::filesystem::path& path, const ModelContainer& container);
ModelContainer load_container(const std::filesystem::path& path);

}  // namespace flowmoe
