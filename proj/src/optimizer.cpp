#include "splatfont/optimizer.hpp"

#include "splatfont/error.hpp"
#include "splatfont/image_io.hpp"
#include "splatfont/ply.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

namespace splatfont {

namespace {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    // splitmix64 finaliser over the pair
    std::uint64_t z = a * 0x9E3779B97F4A7C15ull ^ (b + 0x632BE59BD9B4E019ull + (a << 6) + (a >> 2));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

} // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

Camera sample_camera(const CameraSchedule& schedule, int render_size, std::uint64_t iteration, std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(iteration), static_cast<std::uint32_t>(iteration >> 32)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> az(schedule.azimuth_min, schedule.azimuth_max);
    std::uniform_real_distribution<double> el(schedule.elevation_min, schedule.elevation_max);
    const double a = az(rng);
    const double e = el(rng);
    return orbit_camera(a, e, schedule.radius, render_size, render_size);
}

void OptimizationConfig::validate() const {
    if (lambda.empty()) throw ConfigError("lambda needs at least the global weight lambda_0");
    for (double l : lambda)
        if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("lambda weights must be finite and >= 0");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (iterations < 0) throw ConfigError("iterations must be >= 0");
    if (render_size <= 0) throw ConfigError("render_size must be positive");
    if (cameras_per_step < 1) throw ConfigError("cameras_per_step must be >= 1");
    if (!(cameras.radius > 0.0)) throw ConfigError("camera radius must be positive");
    if (cameras.elevation_min > cameras.elevation_max || cameras.azimuth_min > cameras.azimuth_max)
        throw ConfigError("camera ranges must be ordered");
}

const std::string& OptimizationConfig::prompt_for(int component_id) const {
    static const std::string empty;
    if (component_id == 0) return global_prompt;
    const auto idx = static_cast<std::size_t>(component_id - 1);
    return idx < component_prompts.size() ? component_prompts[idx] : empty;
}

std::vector<double> area_lambdas(std::span<const double> areas, double lambda0, double base) {
    std::vector<double> out{lambda0};
    const double total = std::accumulate(areas.begin(), areas.end(), 0.0);
    for (double a : areas) {
        if (!(a >= 0.0)) throw ConfigError("component areas must be non-negative");
        out.push_back(total > 0.0 ? base * a / total : 0.0);
    }
    return out;
}

void adam_update(GaussianCloud& cloud, AdamState& state, const CloudGrad& grad, double lr, const AdamConfig& cfg) {
    if (grad.size() != cloud.size()) throw ShapeMismatch("gradient rows do not match the cloud");
    state.resize(cloud.size());
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

    double p[kParamsPerGaussian], g[kParamsPerGaussian];
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        double* m = state.m.data() + i * kParamsPerGaussian;
        double* v = state.v.data() + i * kParamsPerGaussian;
        pack_grad(grad[i], g);
        const bool idle = std::all_of(g, g + kParamsPerGaussian, [](double x) { return x == 0.0; }) &&
                          std::all_of(m, m + kParamsPerGaussian, [](double x) { return x == 0.0; }) &&
                          std::all_of(v, v + kParamsPerGaussian, [](double x) { return x == 0.0; });
        if (idle) continue;

        Gaussian3D& gs = cloud.gaussians[i];
        pack_params(gs, p);
        for (int k = 0; k < kParamsPerGaussian; ++k) {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            p[k] -= lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + cfg.eps);
        }
        unpack_params(p, gs);
        gs.rotation.normalize();
        gs.color = gs.color.cwiseMax(0.0).cwiseMin(1.0);
    }
}

SdsOptimizer::SdsOptimizer(GaussianCloud& cloud, OptimizationConfig cfg, GuidanceProvider& provider)
    : cloud_(cloud), cfg_(std::move(cfg)), provider_(provider) {
    cfg_.validate();
    sync_with_cloud();
}

void SdsOptimizer::sync_with_cloud() {
    adam_.resize(cloud_.size());
    grad_norm_sum_.resize(cloud_.size(), 0.0);
    grad_count_.resize(cloud_.size(), 0);
}

CloudGrad SdsOptimizer::accumulate(std::span<const Camera> cams, std::uint64_t iteration, StepReport& report) {
    const std::size_t n = cloud_.size();
    CloudGrad total(n);
    report.loss.assign(cfg_.lambda.size(), std::nullopt);
    report.skipped_components.clear();
    if (cams.empty()) return total;

    std::vector<double> loss_sum(cfg_.lambda.size(), 0.0);
    std::vector<Vec2> screen_sum(n, Vec2::Zero());
    std::vector<std::uint8_t> seen(n, 0);

    for (std::size_t c = 0; c < cams.size(); ++c) {
        const Camera& cam = cams[c];
        for (std::size_t m = 0; m < cfg_.lambda.size(); ++m) {
            const double weight = cfg_.lambda[m];
            if (weight == 0.0) continue;
            const int comp = static_cast<int>(m);
            std::optional<int> subset;
            if (comp != 0) {
                if (cloud_.count_component(comp) == 0) {
                    if (c == 0) report.skipped_components.push_back(comp);
                    continue;
                }
                subset = comp;
            }

            ForwardState state;
            GuidanceRequest req;
            req.image = render(cloud_, cam, subset, cfg_.render, &state);
            req.prompt = cfg_.prompt_for(comp);
            req.seed = mix_seed(mix_seed(cfg_.seed, iteration), c * 1024 + m);
            req.component_id = comp;
            req.camera = cam;
            GuidanceResponse resp = provider_.sds_grad(req);
            if (!resp.grad.same_shape(req.image.pixels))
                throw ProviderFailure("gradient shape does not match the rendered image");
            double sq = 0.0;
            for (double v : resp.grad.data) {
                if (!std::isfinite(v)) throw ProviderFailure("gradient contains non-finite values");
                sq += v * v;
            }
            const double elems = static_cast<double>(resp.grad.data.size());
            loss_sum[m] += resp.loss ? *resp.loss : sq / elems;

            ScreenGrad screen;
            CloudGrad g = render_backward(cloud_, cam, subset, resp.grad, state, &screen);
            const double scale = weight / (elems * static_cast<double>(cams.size()));
            for (std::size_t i = 0; i < n; ++i) {
                if (!screen.visible[i]) continue;
                g[i] *= scale;
                total[i] += g[i];
                screen_sum[i] += screen.mean2d[i] * scale;
                seen[i] = 1;
            }
            report.loss[m] = 0.0;
        }
    }
    for (std::size_t m = 0; m < loss_sum.size(); ++m)
        if (report.loss[m]) report.loss[m] = loss_sum[m] / static_cast<double>(cams.size());

    // Densification statistics in NDC units.
    const double half = 0.5 * cams.front().width;
    pending_screen_.assign(n, -1.0);
    for (std::size_t i = 0; i < n; ++i)
        if (seen[i]) pending_screen_[i] = (screen_sum[i] * half).norm();
    return total;
}

StepReport SdsOptimizer::step(std::span<const Camera> cams, std::uint64_t iteration) {
    sync_with_cloud();
    StepReport report;
    const CloudGrad grad = accumulate(cams, iteration, report);
    adam_update(cloud_, adam_, grad, cfg_.learning_rate, cfg_.adam);
    for (std::size_t i = 0; i < pending_screen_.size(); ++i) {
        if (pending_screen_[i] < 0.0) continue;
        grad_norm_sum_[i] += pending_screen_[i];
        grad_count_[i] += 1;
    }
    pending_screen_.clear();
    return report;
}

StepReport SdsOptimizer::step(std::uint64_t iteration) {
    std::vector<Camera> cams;
    for (int c = 0; c < cfg_.cameras_per_step; ++c)
        cams.push_back(sample_camera(cfg_.cameras, cfg_.render_size,
                                     iteration * static_cast<std::uint64_t>(cfg_.cameras_per_step) + c, cfg_.seed));
    return step(cams, iteration);
}

std::vector<double> SdsOptimizer::mean_grad_norms() const {
    std::vector<double> out(grad_norm_sum_.size(), 0.0);
    for (std::size_t i = 0; i < out.size(); ++i)
        if (grad_count_[i] > 0) out[i] = grad_norm_sum_[i] / grad_count_[i];
    return out;
}

void SdsOptimizer::reset_grad_stats() {
    std::fill(grad_norm_sum_.begin(), grad_norm_sum_.end(), 0.0);
    std::fill(grad_count_.begin(), grad_count_.end(), 0u);
}

DensifyReport SdsOptimizer::densify_prune(std::uint64_t iteration, bool allow_densify) {
    sync_with_cloud();
    const DensifyConfig& dc = cfg_.densify;
    const std::vector<double> norms = mean_grad_norms();
    std::mt19937_64 rng(mix_seed(cfg_.seed ^ 0xD3A5ull, iteration));
    std::normal_distribution<double> normal(0.0, 1.0);

    DensifyReport rep;
    GaussianCloud next;
    next.num_components = cloud_.num_components;
    AdamState next_adam;
    next_adam.step = adam_.step;
    auto keep = [&](const Gaussian3D& g, std::size_t row) {
        next.gaussians.push_back(g);
        const auto* m = adam_.m.data() + row * kParamsPerGaussian;
        const auto* v = adam_.v.data() + row * kParamsPerGaussian;
        next_adam.m.insert(next_adam.m.end(), m, m + kParamsPerGaussian);
        next_adam.v.insert(next_adam.v.end(), v, v + kParamsPerGaussian);
    };

    std::size_t budget = cloud_.size();
    for (std::size_t i = 0; i < cloud_.size(); ++i) {
        const Gaussian3D& g = cloud_.gaussians[i];
        if (g.opacity() < dc.prune_opacity) {
            ++rep.pruned;
            continue;
        }
        if (allow_densify && norms[i] > dc.grad_threshold && budget < dc.max_gaussians) {
            ++budget;
            if (g.scale().maxCoeff() <= dc.clone_scale_limit) {
                keep(g, i);
                keep(g, i);
                ++rep.cloned;
            } else {
                const Mat3 rot = g.rotation_matrix();
                const Vec3 s = g.scale();
                for (int k = 0; k < 2; ++k) {
                    Gaussian3D child = g;
                    const Vec3 offset(normal(rng), normal(rng), normal(rng));
                    child.position = g.position + rot * s.cwiseProduct(offset);
                    child.log_scale = g.log_scale.array() - std::log(dc.split_shrink);
                    keep(child, i);
                }
                ++rep.split;
            }
            continue;
        }
        keep(g, i);
    }

    cloud_.gaussians = std::move(next.gaussians);
    adam_ = std::move(next_adam);
    grad_norm_sum_.assign(cloud_.size(), 0.0);
    grad_count_.assign(cloud_.size(), 0);
    return rep;
}

TrainSummary train(GaussianCloud& cloud, const OptimizationConfig& cfg, GuidanceProvider& provider,
                   const TrainHooks& hooks) {
    SdsOptimizer opt(cloud, cfg, provider);
    TrainSummary summary;
    const bool dca = hooks.labelmap && hooks.front_camera && cfg.dca_cadence > 0;
    const auto densify_until = static_cast<int>(std::floor(cfg.densify.stop_fraction * cfg.iterations));
    for (int it = 1; it <= cfg.iterations; ++it) {
        const StepReport rep = opt.step(static_cast<std::uint64_t>(it));
        if (dca && it % cfg.dca_cadence == 0) summary.relabelled += assign_gaussians(cloud, *hooks.labelmap, *hooks.front_camera);
        if (cfg.densify.interval > 0 && it % cfg.densify.interval == 0) {
            opt.densify_prune(static_cast<std::uint64_t>(it), it <= densify_until);
            ++summary.densify_events;
        }
        if (hooks.on_step) hooks.on_step(it, rep, cloud);
        if (hooks.on_checkpoint && hooks.checkpoint_interval > 0 && it % hooks.checkpoint_interval == 0)
            hooks.on_checkpoint(it, cloud, opt.adam());
    }
    return summary;
}

void write_adam_state(const std::filesystem::path& path, const AdamState& state, std::uint64_t config_hash) {
    std::string out = "SFAD";
    auto put = [&out](const void* p, std::size_t n) { out.append(static_cast<const char*>(p), n); };
    const std::uint32_t version = 1;
    const std::uint64_t rows = state.rows();
    put(&version, sizeof(version));
    put(&state.step, sizeof(state.step));
    put(&config_hash, sizeof(config_hash));
    put(&rows, sizeof(rows));
    for (const auto* arr : {&state.m, &state.v}) {
        for (double d : *arr) {
            const float f = static_cast<float>(d);
            put(&f, sizeof(f));
        }
    }
    write_file(path, out);
}

AdamState read_adam_state(const std::filesystem::path& path, std::uint64_t* config_hash) {
    const std::string bytes = read_file(path);
    constexpr std::size_t header = 4 + 4 + 8 + 8 + 8;
    if (bytes.size() < header || bytes.compare(0, 4, "SFAD") != 0) throw FormatError("not an optimiser state file");
    std::uint32_t version;
    std::uint64_t hash, rows;
    AdamState st;
    std::memcpy(&version, bytes.data() + 4, 4);
    std::memcpy(&st.step, bytes.data() + 8, 8);
    std::memcpy(&hash, bytes.data() + 16, 8);
    std::memcpy(&rows, bytes.data() + 24, 8);
    if (version != 1) throw FormatError("unsupported optimiser state version " + std::to_string(version));
    const std::size_t count = rows * kParamsPerGaussian;
    if (bytes.size() != header + 2 * count * sizeof(float)) throw FormatError("optimiser state is truncated");
    st.m.resize(count);
    st.v.resize(count);
    const char* p = bytes.data() + header;
    for (auto* arr : {&st.m, &st.v}) {
        for (std::size_t i = 0; i < count; ++i, p += sizeof(float)) {
            float f;
            std::memcpy(&f, p, sizeof(f));
            (*arr)[i] = f;
        }
    }
    if (config_hash) *config_hash = hash;
    return st;
}

void write_checkpoint(const std::filesystem::path& dir, const std::string& stem, const GaussianCloud& cloud,
                      const AdamState& state, std::uint64_t config_hash) {
    const auto ply = dir / (stem + ".ply");
    const auto st = dir / (stem + ".state");
    write_ply(dir / (stem + ".ply.tmp"), cloud);
    write_adam_state(dir / (stem + ".state.tmp"), state, config_hash);
    std::filesystem::rename(dir / (stem + ".ply.tmp"), ply);
    std::filesystem::rename(dir / (stem + ".state.tmp"), st);
}

} // namespace splatfont
