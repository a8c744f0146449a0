#include "splatfont/pipeline.hpp"

#include "splatfont/error.hpp"
#include "splatfont/image_io.hpp"
#include "splatfont/ply.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iomanip>
#include <set>
#include <sstream>

namespace splatfont {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

fs::path resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return {};
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

void require_file(const fs::path& p, const std::string& what) {
    if (!p.empty() && !fs::is_regular_file(p)) throw ConfigError(what + " not found: " + p.string());
}

template <class T>
T get_or(const json& obj, const char* key, T fallback) {
    if (!obj.contains(key) || obj[key].is_null()) return fallback;
    try {
        return obj[key].get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

Vec3 vec3_from(const json& v, const char* key) {
    if (!v.is_array() || v.size() != 3) throw ConfigError(std::string("'") + key + "' must be [r, g, b]");
    return Vec3(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
}

void range_from(const json& obj, const char* key, double& lo, double& hi) {
    if (!obj.contains(key)) return;
    const json& v = obj[key];
    if (!v.is_array() || v.size() != 2) throw ConfigError(std::string("'") + key + "' must be [min, max]");
    lo = v[0].get<double>();
    hi = v[1].get<double>();
}

GlyphImage load_glyph(const fs::path& p, GlyphKind kind) {
    return GlyphImage{read_png(p), kind, p.stem().string()};
}

std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(9) << v;
    return os.str();
}

} // namespace

std::uint64_t PipelineConfig::hash() const { return fnv1a64(source.dump()); }

PipelineConfig parse_config(const json& doc, const fs::path& base_dir) {
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    static const std::set<std::string> known = {"glyph",  "prompt", "components", "blend",        "init",
                                                "dca",    "optimize", "render",   "background",   "provider",
                                                "provider_cmd", "seed", "out"};
    for (const auto& [key, _] : doc.items())
        if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "'");

    PipelineConfig cfg;
    cfg.source = doc;
    cfg.glyph = resolve(base_dir, get_or<std::string>(doc, "glyph", ""));
    require_file(cfg.glyph, "glyph image");
    cfg.prompt = get_or<std::string>(doc, "prompt", "");
    cfg.seed = get_or<std::uint64_t>(doc, "seed", 0);
    cfg.out = resolve(base_dir, get_or<std::string>(doc, "out", "out"));

    if (doc.contains("components")) {
        if (!doc["components"].is_array()) throw ConfigError("'components' must be an array");
        for (const json& c : doc["components"]) {
            ComponentSpec spec;
            spec.prompt = get_or<std::string>(c, "prompt", "");
            spec.image = resolve(base_dir, get_or<std::string>(c, "image", ""));
            spec.heatmap = resolve(base_dir, get_or<std::string>(c, "heatmap", ""));
            require_file(spec.image, "component image");
            require_file(spec.heatmap, "heatmap file");
            if (c.contains("samples")) spec.samples = c["samples"].get<std::size_t>();
            if (c.contains("target_color")) spec.target_color = vec3_from(c["target_color"], "target_color");
            if (spec.image.empty() && spec.heatmap.empty() && cfg.glyph.empty())
                throw ConfigError("component " + std::to_string(cfg.components.size() + 1) +
                                  " needs an image, a heatmap, or a top-level glyph");
            cfg.components.push_back(std::move(spec));
        }
    }
    if (cfg.components.empty()) {
        if (cfg.glyph.empty()) throw ConfigError("config needs 'glyph' or at least one component");
        cfg.components.push_back(ComponentSpec{cfg.prompt, {}, {}, std::nullopt, std::nullopt});
    }

    if (doc.contains("blend")) {
        const json& b = doc["blend"];
        cfg.blend.T = get_or<int>(b, "T", cfg.blend.T);
        cfg.blend.K = get_or<int>(b, "K", static_cast<int>(std::floor(0.3 * cfg.blend.T)));
        if (b.contains("alpha")) {
            if (b["alpha"].is_array()) cfg.blend.alpha = b["alpha"].get<std::vector<double>>();
            else cfg.blend.alpha = {b["alpha"].get<double>()};
        }
    }
    try {
        cfg.blend.validate();
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }

    if (doc.contains("init")) {
        const json& i = doc["init"];
        cfg.init.samples = get_or<std::size_t>(i, "samples", cfg.init.samples);
        cfg.init.depth = get_or<double>(i, "depth", cfg.init.depth);
        cfg.init.threshold = get_or<double>(i, "threshold", cfg.init.threshold);
        cfg.init.scale_samples_by_area = get_or<bool>(i, "scale_samples_by_area", cfg.init.scale_samples_by_area);
    }
    if (!(cfg.init.depth > 0.0)) throw ConfigError("init.depth must be positive");
    if (!(cfg.init.threshold >= 0.0 && cfg.init.threshold <= 1.0)) throw ConfigError("init.threshold must be in [0,1]");
    if (cfg.init.samples == 0) throw ConfigError("init.samples must be >= 1");

    auto& opt = cfg.optimize;
    if (doc.contains("dca")) {
        const json& d = doc["dca"];
        cfg.dca.beta = get_or<double>(d, "beta", cfg.dca.beta);
        cfg.dca.delta = get_or<double>(d, "delta", cfg.dca.delta);
        opt.dca_cadence = get_or<int>(d, "cadence", opt.dca_cadence);
    }
    if (!(cfg.dca.delta > 0.0) || !(cfg.dca.beta >= 0.0)) throw ConfigError("dca needs beta >= 0 and delta > 0");

    if (doc.contains("background")) opt.render.background = vec3_from(doc["background"], "background");
    double lambda0 = kGlobalLambda;
    if (doc.contains("optimize")) {
        const json& o = doc["optimize"];
        opt.learning_rate = get_or<double>(o, "learning_rate", opt.learning_rate);
        opt.iterations = get_or<int>(o, "iterations", opt.iterations);
        opt.render_size = get_or<int>(o, "render_size", opt.render_size);
        opt.cameras_per_step = get_or<int>(o, "cameras_per_step", opt.cameras_per_step);
        lambda0 = get_or<double>(o, "lambda0", lambda0);
        cfg.lambda_base = get_or<double>(o, "lambda_base", cfg.lambda_base);
        if (o.contains("lambda")) cfg.explicit_lambda = o["lambda"].get<std::vector<double>>();
        cfg.checkpoint_interval = get_or<int>(o, "checkpoint_interval", cfg.checkpoint_interval);
        const std::string rast = get_or<std::string>(o, "rasterizer", "tiled");
        if (rast == "tiled") opt.render.rasterizer = Rasterizer::Tiled;
        else if (rast == "reference") opt.render.rasterizer = Rasterizer::Reference;
        else throw ConfigError("optimize.rasterizer must be 'tiled' or 'reference'");
        if (o.contains("camera")) {
            const json& c = o["camera"];
            range_from(c, "azimuth", opt.cameras.azimuth_min, opt.cameras.azimuth_max);
            range_from(c, "elevation", opt.cameras.elevation_min, opt.cameras.elevation_max);
            opt.cameras.radius = get_or<double>(c, "radius", opt.cameras.radius);
        }
        if (o.contains("densify")) {
            const json& d = o["densify"];
            opt.densify.interval = get_or<int>(d, "interval", opt.densify.interval);
            opt.densify.stop_fraction = get_or<double>(d, "stop_fraction", opt.densify.stop_fraction);
            opt.densify.grad_threshold = get_or<double>(d, "grad_threshold", opt.densify.grad_threshold);
            opt.densify.prune_opacity = get_or<double>(d, "prune_opacity", opt.densify.prune_opacity);
            opt.densify.clone_scale_limit = get_or<double>(d, "clone_scale_limit", opt.densify.clone_scale_limit);
            opt.densify.split_shrink = get_or<double>(d, "split_shrink", opt.densify.split_shrink);
            opt.densify.max_gaussians = get_or<std::size_t>(d, "max_gaussians", opt.densify.max_gaussians);
        }
        if (o.contains("adam")) {
            const json& a = o["adam"];
            opt.adam.beta1 = get_or<double>(a, "beta1", opt.adam.beta1);
            opt.adam.beta2 = get_or<double>(a, "beta2", opt.adam.beta2);
            opt.adam.eps = get_or<double>(a, "eps", opt.adam.eps);
        }
    }
    opt.lambda = {lambda0};
    opt.seed = cfg.seed;
    opt.global_prompt = cfg.prompt;
    for (const auto& c : cfg.components) opt.component_prompts.push_back(c.prompt);
    if (cfg.explicit_lambda && cfg.explicit_lambda->size() != cfg.components.size() + 1)
        throw ConfigError("optimize.lambda needs one weight per component plus lambda_0");

    if (doc.contains("render")) {
        const json& r = doc["render"];
        cfg.render.size = get_or<int>(r, "size", cfg.render.size);
        cfg.render.views = get_or<int>(r, "views", cfg.render.views);
        cfg.render.elevation = get_or<double>(r, "elevation", cfg.render.elevation);
    }
    if (cfg.render.size <= 0 || cfg.render.views < 1) throw ConfigError("render.size and render.views must be positive");

    const std::string provider = get_or<std::string>(doc, "provider", "oracle");
    if (provider == "oracle") cfg.provider = ProviderKind::Oracle;
    else if (provider == "external") cfg.provider = ProviderKind::External;
    else throw ConfigError("provider must be 'oracle' or 'external', got '" + provider + "'");
    cfg.provider_cmd = get_or<std::string>(doc, "provider_cmd", "");

    try {
        opt.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

PipelineConfig load_config(const fs::path& path) {
    if (!fs::is_regular_file(path)) throw ConfigError("config file not found: " + path.string());
    json doc;
    try {
        std::ifstream f(path);
        doc = json::parse(f);
    } catch (const json::exception& e) {
        throw ConfigError("cannot parse " + path.string() + ": " + e.what());
    }
    return parse_config(doc, path.parent_path());
}

std::vector<PreparedComponent> prepare_components(const PipelineConfig& cfg, ExternalGuidance* external) {
    std::optional<GlyphImage> glyph;
    if (!cfg.glyph.empty()) glyph = load_glyph(cfg.glyph, GlyphKind::Printed);

    std::vector<PreparedComponent> out;
    for (std::size_t i = 0; i < cfg.components.size(); ++i) {
        const ComponentSpec& spec = cfg.components[i];
        const int id = static_cast<int>(i) + 1;
        std::optional<GlyphImage> stylized;
        if (!spec.image.empty()) stylized = load_glyph(spec.image, GlyphKind::Stylized);
        else if (glyph) stylized = *glyph;

        ComponentHeatmap heat;
        heat.component_id = id;
        if (!spec.heatmap.empty()) heat.values = read_heatmap(spec.heatmap);
        else if (external && stylized) heat.values = external->segment(stylized->pixels);
        else heat = fallback_segment(*stylized, id);
        try {
            heat.validate();
        } catch (const Error& e) {
            throw ConfigError("component " + std::to_string(id) + ": " + e.what());
        }
        if (!stylized) stylized = GlyphImage{Image(heat.width(), heat.height(), 3, 0.5), GlyphKind::Stylized, ""};
        if (stylized->pixels.width != heat.width() || stylized->pixels.height != heat.height())
            throw ConfigError("component " + std::to_string(id) + ": image and heatmap resolutions differ");
        if (!out.empty() && (out.front().heatmap.width() != heat.width() || out.front().heatmap.height() != heat.height()))
            throw ConfigError("all component heatmaps must share one resolution");

        Mask mask = threshold_heatmap(heat, cfg.init.threshold);
        if (mask.count() == 0) throw EmptyMask("component " + std::to_string(id) + " has no foreground");
        out.push_back(PreparedComponent{id, std::move(heat), std::move(mask), std::move(*stylized)});
    }
    return out;
}

Mask glyph_mask(const std::vector<PreparedComponent>& comps) {
    Mask m(comps.front().mask.width, comps.front().mask.height);
    for (const auto& c : comps)
        for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] |= c.mask.data[i];
    return m;
}

std::vector<double> component_lambdas(const PipelineConfig& cfg, const std::vector<PreparedComponent>& comps) {
    if (cfg.explicit_lambda) return *cfg.explicit_lambda;
    std::vector<double> areas;
    for (const auto& c : comps) areas.push_back(static_cast<double>(c.mask.count()));
    return area_lambdas(areas, cfg.optimize.lambda.front(), cfg.lambda_base);
}

GaussianCloud build_initial_cloud(const PipelineConfig& cfg, const std::vector<PreparedComponent>& comps) {
    double total_area = 0.0;
    for (const auto& c : comps) total_area += static_cast<double>(c.mask.count());

    GaussianCloud cloud;
    cloud.num_components = static_cast<int>(comps.size()) + 1;
    for (std::size_t i = 0; i < comps.size(); ++i) {
        const auto& c = comps[i];
        const auto& spec = cfg.components[i];
        std::size_t n = cfg.init.samples;
        if (spec.samples) n = *spec.samples;
        else if (cfg.init.scale_samples_by_area && comps.size() > 1)
            n = static_cast<std::size_t>(std::llround(static_cast<double>(cfg.init.samples) *
                                                      static_cast<double>(c.mask.count()) / total_area));
        n = std::max<std::size_t>(n, 1);
        const auto pts = sample_foreground(c.mask, n, mix(cfg.seed, 2 * i));
        cloud.append(lift_to_cloud(pts, c.stylized, cfg.init.depth, c.component_id, mix(cfg.seed, 2 * i + 1)));
    }
    cloud.quantize_to_float();
    return cloud;
}

GaussianCloud oracle_target_cloud(const PipelineConfig& cfg, const GaussianCloud& cloud) {
    GaussianCloud target = cloud;
    for (auto& g : target.gaussians) {
        if (g.component_id < 1 || g.component_id > cfg.num_components()) continue;
        const auto& spec = cfg.components[static_cast<std::size_t>(g.component_id - 1)];
        if (spec.target_color) g.color = *spec.target_color;
    }
    return target;
}

std::unique_ptr<GuidanceProvider> make_provider(const PipelineConfig& cfg, const GaussianCloud& cloud) {
    if (cfg.provider == ProviderKind::External) {
        if (cfg.provider_cmd.empty()) throw ConfigError("provider 'external' needs provider_cmd / --provider-cmd");
        return std::make_unique<ExternalGuidance>(cfg.provider_cmd);
    }
    return OracleGuidance::from_cloud(oracle_target_cloud(cfg, cloud), cfg.optimize.render);
}

namespace {

GaussianCloud load_cloud(const fs::path& p) {
    if (!fs::is_regular_file(p)) throw ConfigError("cloud file not found: " + p.string());
    return read_ply(p);
}

std::unique_ptr<ExternalGuidance> maybe_external(const PipelineConfig& cfg) {
    if (cfg.provider != ProviderKind::External) return nullptr;
    if (cfg.provider_cmd.empty()) throw ConfigError("provider 'external' needs provider_cmd / --provider-cmd");
    return std::make_unique<ExternalGuidance>(cfg.provider_cmd);
}

ComponentLabelMap label_map_for(const PipelineConfig& cfg, const std::vector<PreparedComponent>& comps) {
    std::vector<ComponentHeatmap> heats;
    for (const auto& c : comps) heats.push_back(c.heatmap);
    return build_label_map(heats, cfg.dca.beta, cfg.dca.delta);
}

} // namespace

fs::path cmd_init(const PipelineConfig& cfg) {
    auto external = maybe_external(cfg);
    const auto comps = prepare_components(cfg, external.get());
    const GaussianCloud cloud = build_initial_cloud(cfg, comps);
    fs::create_directories(cfg.out);
    const fs::path path = cfg.out / "init.ply";
    write_ply(path, cloud);
    return path;
}

fs::path cmd_optimize(const PipelineConfig& cfg, const fs::path& cloud_path) {
    GaussianCloud cloud = load_cloud(cloud_path);
    const auto comps = prepare_components(cfg, nullptr);
    cloud.num_components = std::max(cloud.num_components, cfg.num_components() + 1);

    OptimizationConfig opt = cfg.optimize;
    opt.lambda = component_lambdas(cfg, comps);
    fs::create_directories(cfg.out);
    const std::uint64_t hash = cfg.hash();

    if (opt.iterations == 0) {
        const fs::path path = cfg.out / "optimized.ply";
        write_ply(path, cloud);
        return path;
    }

    auto provider = make_provider(cfg, cloud);
    const ComponentLabelMap labels = label_map_for(cfg, comps);

    std::ofstream log(cfg.out / "train_log.csv", std::ios::trunc);
    log << "iteration";
    for (std::size_t m = 0; m < opt.lambda.size(); ++m) log << ",loss_" << m;
    log << ",gaussians\n";

    write_checkpoint(cfg.out, "checkpoint", cloud, AdamState{}, hash);
    TrainHooks hooks;
    hooks.labelmap = &labels;
    hooks.front_camera = front_camera(labels.width, labels.height);
    hooks.checkpoint_interval = cfg.checkpoint_interval;
    std::set<int> warned;
    hooks.on_step = [&](int it, const StepReport& rep, const GaussianCloud& c) {
        for (int m : rep.skipped_components)
            if (warned.insert(m).second)
                std::cerr << "warning: component " << m << " has no Gaussians at iteration " << it << "; skipped\n";
        log << it;
        for (const auto& l : rep.loss) {
            log << ',';
            if (l) log << format_double(*l);
        }
        log << ',' << c.size() << '\n';
    };
    hooks.on_checkpoint = [&](int, const GaussianCloud& c, const AdamState& st) {
        write_checkpoint(cfg.out, "checkpoint", c, st, hash);
    };
    train(cloud, opt, *provider, hooks);
    log.flush();

    const fs::path path = cfg.out / "optimized.ply";
    write_ply(path, cloud);
    return path;
}

std::vector<fs::path> cmd_render(const PipelineConfig& cfg, const fs::path& cloud_path, int views, int size) {
    const GaussianCloud cloud = load_cloud(cloud_path);
    if (views < 1 || size < 1) throw ConfigError("views and size must be positive");
    fs::create_directories(cfg.out);
    RenderOptions opts = cfg.optimize.render;
    opts.rasterizer = Rasterizer::Tiled;
    const std::array<double, 3> bg{opts.background[0], opts.background[1], opts.background[2]};
    std::vector<fs::path> paths;
    const auto cams = turntable_cameras(views, size, cfg.render.elevation, cfg.optimize.cameras.radius);
    for (int i = 0; i < views; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "view_%03d.png", i);
        const fs::path p = cfg.out / name;
        write_render_png(p, render(cloud, cams[static_cast<std::size_t>(i)], std::nullopt, opts), bg);
        paths.push_back(p);
    }
    return paths;
}

fs::path cmd_assign(const PipelineConfig& cfg, const fs::path& cloud_path) {
    GaussianCloud cloud = load_cloud(cloud_path);
    const auto comps = prepare_components(cfg, nullptr);
    const ComponentLabelMap labels = label_map_for(cfg, comps);
    const std::size_t changed = assign_gaussians(cloud, labels, front_camera(labels.width, labels.height));
    fs::create_directories(cfg.out);
    write_label_map_png(cfg.out / "labelmap.png", labels);
    const fs::path path = cfg.out / "assigned.ply";
    write_ply(path, cloud);
    std::ofstream(cfg.out / "assign.json") << json{{"relabelled", changed}, {"gaussians", cloud.size()}}.dump(2) << "\n";
    return path;
}

json cmd_metrics(const PipelineConfig& cfg, const fs::path& cloud_path) {
    const GaussianCloud cloud = load_cloud(cloud_path);
    const auto comps = prepare_components(cfg, nullptr);
    const Mask mask = glyph_mask(comps);
    RenderOptions opts = cfg.optimize.render;

    std::vector<Image> renders;
    for (const Camera& cam : turntable_cameras(cfg.render.views, cfg.render.size, cfg.render.elevation,
                                               cfg.optimize.cameras.radius))
        renders.push_back(render(cloud, cam, std::nullopt, opts).pixels);
    json out;
    out["gaussians"] = cloud.size();
    if (renders.size() >= 2) out["view_consistency"] = view_consistency(renders).to_json();
    out["silhouette_iou"] = silhouette_iou(cloud, mask, opts);

    if (cfg.provider == ProviderKind::External) {
        auto external = maybe_external(cfg);
        std::vector<double> scores;
        for (const Image& img : renders) scores.push_back(external->clip_score(img, cfg.prompt));
        out["clip_scores"] = scores;
    }
    fs::create_directories(cfg.out);
    std::ofstream(cfg.out / "metrics.json") << out.dump(2) << "\n";
    return out;
}

std::vector<fs::path> cmd_export(const PipelineConfig& cfg, const fs::path& cloud_path) {
    const GaussianCloud cloud = load_cloud(cloud_path);
    fs::create_directories(cfg.out);
    std::vector<fs::path> paths;
    for (int m = 1; m < cloud.num_components; ++m) {
        GaussianCloud part;
        part.num_components = cloud.num_components;
        for (const auto& g : cloud.gaussians)
            if (g.component_id == m) part.gaussians.push_back(g);
        const fs::path p = cfg.out / ("component_" + std::to_string(m) + ".ply");
        write_ply(p, part);
        paths.push_back(p);
    }
    const auto comps = prepare_components(cfg, nullptr);
    const ComponentLabelMap labels = label_map_for(cfg, comps);
    paths.push_back(cfg.out / "labelmap.png");
    write_label_map_png(paths.back(), labels);

    RenderOptions opts = cfg.optimize.render;
    const RenderedImage front = render(cloud, front_camera(labels.width, labels.height), std::nullopt, opts);
    paths.push_back(cfg.out / "front.png");
    write_render_png(paths.back(), front, {opts.background[0], opts.background[1], opts.background[2]});
    return paths;
}

} // namespace splatfont
