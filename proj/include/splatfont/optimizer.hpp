#pragma once

#include "splatfont/camera.hpp"
#include "splatfont/dca.hpp"
#include "splatfont/gaussian.hpp"
#include "splatfont/guidance.hpp"
#include "splatfont/render.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace splatfont {

inline constexpr double kGlobalLambda = 0.01;
inline constexpr double kLearningRate = 0.001;

/// Viewpoint distribution for score distillation.
struct CameraSchedule {
    double azimuth_min = 0.0;
    double azimuth_max = 360.0;
    double elevation_min = -10.0;
    double elevation_max = 30.0;
    double radius = 2.5;
};

/// Azimuth and elevation uniform over the schedule, looking at the origin.
/// Deterministic in (iteration, seed).
Camera sample_camera(const CameraSchedule& schedule, int render_size, std::uint64_t iteration, std::uint64_t seed);

struct DensifyConfig {
    int interval = 200;
    double stop_fraction = 0.7;      // no densification after this share of the budget
    double grad_threshold = 2e-4;    // mean NDC-space positional gradient norm
    double prune_opacity = 0.005;
    double clone_scale_limit = 0.01; // Gaussians at or below this max scale are cloned, larger ones split
    double split_shrink = 1.6;
    std::size_t max_gaussians = 200000;
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct OptimizationConfig {
    std::vector<double> lambda{kGlobalLambda}; // lambda_0 .. lambda_M
    double learning_rate = kLearningRate;
    int iterations = 3000;
    int render_size = 128;
    int cameras_per_step = 1;
    CameraSchedule cameras{};
    DensifyConfig densify{};
    int dca_cadence = 100;
    AdamConfig adam{};
    std::uint64_t seed = 0;
    std::string global_prompt;
    std::vector<std::string> component_prompts; // y_1 .. y_M
    RenderOptions render{};

    /// Throws ConfigError.
    void validate() const;
    const std::string& prompt_for(int component_id) const;
};

/// lambda_0 followed by lambda_m = base * area_m / sum(area).
std::vector<double> area_lambdas(std::span<const double> areas, double lambda0 = kGlobalLambda, double base = 1.0);

struct AdamState {
    std::vector<double> m; // kParamsPerGaussian per Gaussian
    std::vector<double> v;
    std::uint64_t step = 0;

    void resize(std::size_t gaussians) {
        m.resize(gaussians * kParamsPerGaussian, 0.0);
        v.resize(gaussians * kParamsPerGaussian, 0.0);
    }
    std::size_t rows() const { return m.size() / kParamsPerGaussian; }
};

/// One Adam step on every Gaussian. Rows with zero gradient and zero moments
/// are left bit-identical; updated rows get their quaternion renormalised and
/// colour clamped to [0,1].
void adam_update(GaussianCloud& cloud, AdamState& state, const CloudGrad& grad, double lr, const AdamConfig& cfg = {});

struct StepReport {
    std::vector<std::optional<double>> loss; // per term m; nullopt when skipped
    std::vector<int> skipped_components;     // EmptyComponent terms
};

struct DensifyReport {
    std::size_t pruned = 0;
    std::size_t cloned = 0;
    std::size_t split = 0;
};

/// Component-wise score-distillation optimiser over a cloud it does not own.
class SdsOptimizer {
public:
    SdsOptimizer(GaussianCloud& cloud, OptimizationConfig cfg, GuidanceProvider& provider);

    /// Renders every weighted term for `cams`, queries the provider, and
    /// returns sum_m lambda_m * dL_m/dtheta averaged over cameras. The
    /// provider gradient is taken as the gradient of a per-element mean.
    /// Parameters are not touched.
    CloudGrad accumulate(std::span<const Camera> cams, std::uint64_t iteration, StepReport& report);

    /// accumulate() followed by one Adam update. On ProviderFailure the
    /// cloud and optimiser state are unchanged.
    StepReport step(std::span<const Camera> cams, std::uint64_t iteration);
    /// step() with cameras drawn from the schedule.
    StepReport step(std::uint64_t iteration);

    DensifyReport densify_prune(std::uint64_t iteration, bool allow_densify = true);

    AdamState& adam() { return adam_; }
    const AdamState& adam() const { return adam_; }
    const OptimizationConfig& config() const { return cfg_; }
    /// Mean accumulated NDC positional-gradient norm per Gaussian.
    std::vector<double> mean_grad_norms() const;
    void reset_grad_stats();
    /// Resizes optimiser bookkeeping after the cloud was replaced externally.
    void sync_with_cloud();

private:
    GaussianCloud& cloud_;
    OptimizationConfig cfg_;
    GuidanceProvider& provider_;
    AdamState adam_;
    std::vector<double> grad_norm_sum_;
    std::vector<std::uint32_t> grad_count_;
    std::vector<double> pending_screen_; // -1 where not visible in the last accumulate()
};

/// Hooks for the outer training loop.
struct TrainHooks {
    const ComponentLabelMap* labelmap = nullptr; // enables periodic relabelling
    std::optional<Camera> front_camera;
    std::function<void(int iteration, const StepReport&, const GaussianCloud&)> on_step;
    int checkpoint_interval = 0;
    std::function<void(int iteration, const GaussianCloud&, const AdamState&)> on_checkpoint;
};

struct TrainSummary {
    std::size_t relabelled = 0;
    std::size_t densify_events = 0;
};

/// Runs cfg.iterations steps with densify/prune and DCA at their cadences.
TrainSummary train(GaussianCloud& cloud, const OptimizationConfig& cfg, GuidanceProvider& provider,
                   const TrainHooks& hooks = {});

/// Binary optimiser sidecar: "SFAD", u32 version, u64 step, u64 config hash,
/// u64 rows, then m and v as float32 little-endian arrays of rows*14 values.
void write_adam_state(const std::filesystem::path& path, const AdamState& state, std::uint64_t config_hash);
AdamState read_adam_state(const std::filesystem::path& path, std::uint64_t* config_hash = nullptr);

/// Writes `<stem>.ply` and `<stem>.state` atomically (temp file + rename).
void write_checkpoint(const std::filesystem::path& dir, const std::string& stem, const GaussianCloud& cloud,
                      const AdamState& state, std::uint64_t config_hash);

std::uint64_t fnv1a64(std::string_view bytes);

} // namespace splatfont
