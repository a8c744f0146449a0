#include "splatfont/error.hpp"
#include "splatfont/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace fs = std::filesystem;
using namespace splatfont;

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string provider;
    std::string provider_cmd;
    std::string cloud;
    int views = 0;
    int size = 0;
};

PipelineConfig load(const Options& o) {
    PipelineConfig cfg = load_config(o.config);
    if (o.seed) {
        cfg.seed = *o.seed;
        cfg.optimize.seed = *o.seed;
    }
    if (!o.out.empty()) cfg.out = o.out;
    if (o.provider == "oracle") cfg.provider = ProviderKind::Oracle;
    else if (o.provider == "external") cfg.provider = ProviderKind::External;
    if (!o.provider_cmd.empty()) cfg.provider_cmd = o.provider_cmd;
    return cfg;
}

fs::path cloud_or(const Options& o, const PipelineConfig& cfg, const char* fallback) {
    return o.cloud.empty() ? cfg.out / fallback : fs::path(o.cloud);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"SplatFont3D: glyph images to multi-component 3D Gaussian splat fonts"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub, bool needs_cloud) {
        sub->add_option("--config", o.config, "JSON config")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "override the config seed");
        sub->add_option("--out", o.out, "output directory");
        sub->add_option("--provider", o.provider, "guidance provider")->check(CLI::IsMember({"oracle", "external"}));
        sub->add_option("--provider-cmd", o.provider_cmd, "command that starts the external sidecar");
        if (needs_cloud) sub->add_option("--cloud", o.cloud, "input PLY (defaults depend on the subcommand)");
    };

    auto* init = app.add_subcommand("init", "segment, sample and lift the glyph into init.ply");
    common(init, false);
    auto* optimize = app.add_subcommand("optimize", "run the guided optimisation; writes optimized.ply");
    common(optimize, true);
    auto* rend = app.add_subcommand("render", "turntable renders view_000.png ...");
    common(rend, true);
    rend->add_option("--views", o.views, "number of views (default from config)");
    rend->add_option("--size", o.size, "square render size (default from config)");
    auto* assign = app.add_subcommand("assign", "relabel Gaussians with the component label map");
    common(assign, true);
    auto* metrics = app.add_subcommand("metrics", "view consistency and silhouette IoU as metrics.json");
    common(metrics, true);
    auto* exp = app.add_subcommand("export", "per-component PLYs, label map and a front render");
    common(exp, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        const PipelineConfig cfg = load(o);
        if (init->parsed()) {
            std::cout << cmd_init(cfg).string() << "\n";
        } else if (optimize->parsed()) {
            std::cout << cmd_optimize(cfg, cloud_or(o, cfg, "init.ply")).string() << "\n";
        } else if (rend->parsed()) {
            const int views = o.views > 0 ? o.views : cfg.render.views;
            const int size = o.size > 0 ? o.size : cfg.render.size;
            for (const auto& p : cmd_render(cfg, cloud_or(o, cfg, "optimized.ply"), views, size))
                std::cout << p.string() << "\n";
        } else if (assign->parsed()) {
            std::cout << cmd_assign(cfg, cloud_or(o, cfg, "optimized.ply")).string() << "\n";
        } else if (metrics->parsed()) {
            std::cout << cmd_metrics(cfg, cloud_or(o, cfg, "optimized.ply")).dump(2) << "\n";
        } else if (exp->parsed()) {
            for (const auto& p : cmd_export(cfg, cloud_or(o, cfg, "optimized.ply"))) std::cout << p.string() << "\n";
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
