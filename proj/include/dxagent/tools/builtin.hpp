#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dxagent/domain/domain.hpp"
#include "dxagent/tools/phs.hpp"
#include "dxagent/tools/registry.hpp"

namespace dxagent::tools {

inline constexpr const char* kBrainVolume = "brain_volume_analyzer";
inline constexpr const char* kHippocampus = "hippocampus_analyzer";
inline constexpr const char* kGreyMatter = "grey_matter_analyzer";
inline constexpr const char* kWhiteMatter = "white_matter_analyzer";
inline constexpr const char* kPhsCalculator = "phs_calculator";
inline constexpr const char* kMriPredictor = "mri_predictor";

enum class VolumeKind { brain_volume, hippocampus, grey_matter, white_matter };

inline constexpr VolumeKind kVolumeKinds[] = {VolumeKind::brain_volume, VolumeKind::hippocampus, VolumeKind::grey_matter,
                                              VolumeKind::white_matter};

std::string tool_name(VolumeKind kind);
std::string_view sidecar_key(VolumeKind kind);  // "brain_volume", "hippocampus", ...
const std::vector<std::string>& measure_names(VolumeKind kind);

struct VolumeResult {
    VolumeKind kind = VolumeKind::hippocampus;
    std::map<std::string, double> mm3;
    VolumeUnit source_unit = VolumeUnit::mL;
    std::vector<std::string> notices;
};

nlohmann::json to_payload(const VolumeResult& r);

/// "<dir>/<stem>.volumes.json" where stem drops .nii/.nii.gz/.hdr/.img.
std::filesystem::path sidecar_path(const std::filesystem::path& image);

/// Reads the fixture sidecar: {"unit": "mL"|"mm3", "<kind>": {measure: value}}.
/// A missing hippocampus total is derived from left + right.
VolumeResult read_volume_sidecar(VolumeKind kind, const std::filesystem::path& image);

/// Parses an external result file of "key value unit" lines.
VolumeResult parse_volume_result(VolumeKind kind, const std::string& text);

/// Header validation applied before any imaging tool runs. Violations throw
/// InvalidImage unless waived, in which case they become notices.
std::vector<std::string> check_input_image(const std::filesystem::path& image, bool waive);

struct ExternalCommand {
    std::vector<std::string> argv;  // placeholders {input}, {output_dir}, plus {age}, {future_years} for prediction
    std::string result_file;        // relative to {output_dir}
    std::chrono::milliseconds timeout{std::chrono::minutes(30)};
};

ExternalCommand parse_external_command(const nlohmann::json& j, const std::string& default_result_file);

std::shared_ptr<ToolBackend> make_fixture_volume_backend(VolumeKind kind);
std::shared_ptr<ToolBackend> make_external_volume_backend(VolumeKind kind, ExternalCommand command);
std::shared_ptr<ToolBackend> make_phs_backend(std::shared_ptr<const phs::Model> model);
std::shared_ptr<ToolBackend> make_stub_mri_predictor();
std::shared_ptr<ToolBackend> make_external_mri_predictor(ExternalCommand command);

ToolSpec volume_spec(VolumeKind kind, BackendKind backend);
ToolSpec phs_spec();
ToolSpec mri_predictor_spec(BackendKind backend);

/// Builds the six built-ins. Config keys (all optional):
///   imaging: {backend: fixture|external_process, command: [...], result_file, timeout_ms,
///             commands: {tool_name: [...]}}
///   phs: {model_path}
///   mri_predictor: {backend: stub|external_process, command: [...], result_file, timeout_ms}
ToolRegistry make_default_registry(const nlohmann::json& config = nlohmann::json::object());

}  // namespace dxagent::tools
