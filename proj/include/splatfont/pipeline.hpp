#pragma once

#include "splatfont/dca.hpp"
#include "splatfont/gaussian.hpp"
#include "splatfont/glyph2cloud.hpp"
#include "splatfont/metrics.hpp"
#include "splatfont/optimizer.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace splatfont {

inline constexpr int kFinalRenderResolution = 1024;

enum class ProviderKind { Oracle, External };

struct ComponentSpec {
    std::string prompt;
    std::filesystem::path image;   // stylized component image; falls back to the glyph
    std::filesystem::path heatmap; // HMAP or PNG; falls back to segmenting `image`
    std::optional<std::size_t> samples;
    std::optional<Vec3> target_color; // flat colour the oracle provider steers towards
};

struct InitConfig {
    std::size_t samples = 20000;
    double depth = 0.1;
    double threshold = 0.5;
    bool scale_samples_by_area = true;
};

struct DcaConfig {
    double beta = kDefaultDcaBeta;
    double delta = kDefaultDcaDelta;
};

struct RenderConfig {
    int size = kFinalRenderResolution;
    int views = 36;
    double elevation = kTurntableElevation;
};

/// Everything a run needs; loaded from one JSON document.
struct PipelineConfig {
    std::filesystem::path glyph;
    std::string prompt;
    std::vector<ComponentSpec> components; // component m is components[m-1]
    BlendSchedule blend{};
    InitConfig init{};
    DcaConfig dca{};
    OptimizationConfig optimize{};
    std::optional<std::vector<double>> explicit_lambda;
    double lambda_base = 1.0;
    int checkpoint_interval = 500;
    RenderConfig render{};
    ProviderKind provider = ProviderKind::Oracle;
    std::string provider_cmd;
    std::uint64_t seed = 0;
    std::filesystem::path out = "out";
    nlohmann::json source; // document as loaded, for hashing

    int num_components() const { return static_cast<int>(components.size()); }
    std::uint64_t hash() const;
};

/// Parses a config document; relative paths resolve against `base_dir`.
/// Throws ConfigError on invalid values or missing files.
PipelineConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
PipelineConfig load_config(const std::filesystem::path& path);

/// Per-component inputs after segmentation.
struct PreparedComponent {
    int component_id;
    ComponentHeatmap heatmap;
    Mask mask;
    GlyphImage stylized;
};

std::vector<PreparedComponent> prepare_components(const PipelineConfig& cfg, ExternalGuidance* external = nullptr);
/// Union of the component masks.
Mask glyph_mask(const std::vector<PreparedComponent>& comps);
/// lambda_0 and area-proportional local weights (or the explicit override).
std::vector<double> component_lambdas(const PipelineConfig& cfg, const std::vector<PreparedComponent>& comps);

/// Segment, threshold, sample and lift every component into one cloud
/// (parameters rounded to float32 so that the written PLY reloads exactly).
GaussianCloud build_initial_cloud(const PipelineConfig& cfg, const std::vector<PreparedComponent>& comps);

/// Copy of `cloud` recoloured with each component's target colour.
GaussianCloud oracle_target_cloud(const PipelineConfig& cfg, const GaussianCloud& cloud);

std::unique_ptr<GuidanceProvider> make_provider(const PipelineConfig& cfg, const GaussianCloud& cloud);

// Subcommands. Each writes into cfg.out and returns the main artefact path.
std::filesystem::path cmd_init(const PipelineConfig& cfg);
std::filesystem::path cmd_optimize(const PipelineConfig& cfg, const std::filesystem::path& cloud_path);
std::vector<std::filesystem::path> cmd_render(const PipelineConfig& cfg, const std::filesystem::path& cloud_path,
                                              int views, int size);
std::filesystem::path cmd_assign(const PipelineConfig& cfg, const std::filesystem::path& cloud_path);
nlohmann::json cmd_metrics(const PipelineConfig& cfg, const std::filesystem::path& cloud_path);
std::vector<std::filesystem::path> cmd_export(const PipelineConfig& cfg, const std::filesystem::path& cloud_path);

} // namespace splatfont
