#pragma once

#include "splatfont/camera.hpp"
#include "splatfont/gaussian.hpp"
#include "splatfont/image.hpp"
#include "splatfont/render.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

namespace splatfont {

/// One score-distillation query: a rendered view and the prompt it should match.
struct GuidanceRequest {
    RenderedImage image;
    std::string prompt;
    std::optional<int> timestep; // provider samples t when unset
    std::uint64_t seed = 0;
    int component_id = 0;        // 0 = global composition
    Camera camera;               // in-process providers only; not sent over the wire
};

/// dL/dpixels (already weighted by w(t)) plus the weight itself.
struct GuidanceResponse {
    Image grad; // H x W x 3
    double weight = 1.0;
    std::optional<double> loss;
};

class GuidanceProvider {
public:
    virtual ~GuidanceProvider() = default;
    virtual GuidanceResponse sds_grad(const GuidanceRequest& req) = 0;
};

/// grad = 2 (image - target), weight 1. Throws NoTarget when `target` is null.
GuidanceResponse oracle_guidance(const GuidanceRequest& req, const Image* target);

/// Image-matching stand-in for a diffusion prior. Targets are looked up per
/// (camera, component); the lookup returns nullopt when none exists.
class OracleGuidance : public GuidanceProvider {
public:
    using TargetFn = std::function<std::optional<Image>(const Camera&, int component_id)>;

    explicit OracleGuidance(TargetFn targets) : targets_(std::move(targets)) {}

    /// Targets rendered from `target` with the same camera and component subset.
    static std::unique_ptr<OracleGuidance> from_cloud(GaussianCloud target, RenderOptions opts = {});
    /// Camera-independent targets keyed by component.
    static std::unique_ptr<OracleGuidance> from_images(std::map<int, Image> targets);

    GuidanceResponse sds_grad(const GuidanceRequest& req) override;

private:
    TargetFn targets_;
};

namespace wire {

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

/// Raw float32 little-endian H*W*C payload, base64 encoded.
std::string encode_float_image(const Image& img);
Image decode_float_image(const std::string& b64, int width, int height, int channels);

nlohmann::json sds_request(std::uint64_t id, const GuidanceRequest& req);
GuidanceResponse sds_response(const nlohmann::json& msg, int width, int height);

} // namespace wire

/// Talks newline-delimited JSON to a sidecar process started with `/bin/sh -c command`.
/// Any transport failure, error reply or malformed reply raises ProviderFailure.
class ExternalGuidance : public GuidanceProvider {
public:
    explicit ExternalGuidance(std::string command);
    ~ExternalGuidance() override;
    ExternalGuidance(const ExternalGuidance&) = delete;
    ExternalGuidance& operator=(const ExternalGuidance&) = delete;

    GuidanceResponse sds_grad(const GuidanceRequest& req) override;
    Image segment(const Image& rgb);
    double clip_score(const Image& rgb, const std::string& prompt);
    Image stylize(const Image& printed, const std::string& prompt, double alpha, int k, std::uint64_t seed);

    /// Sends one request (the id field is filled in) and returns the matching reply.
    nlohmann::json call(nlohmann::json request);

private:
    void start();
    void stop();

    std::string command_;
    int pid_ = -1;
    int to_child_ = -1;
    std::FILE* from_child_ = nullptr;
    std::uint64_t next_id_ = 1;
};

} // namespace splatfont
