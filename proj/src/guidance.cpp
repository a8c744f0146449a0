#include "splatfont/guidance.hpp"

#include "splatfont/error.hpp"
#include "splatfont/image_io.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <csignal>
#include <cstring>

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

namespace splatfont {

using nlohmann::json;

GuidanceResponse oracle_guidance(const GuidanceRequest& req, const Image* target) {
    if (!target) throw NoTarget("no target for component " + std::to_string(req.component_id));
    const Image& img = req.image.pixels;
    if (!img.same_shape(*target)) throw ShapeMismatch("target shape differs from the rendered image");
    GuidanceResponse resp{Image(img.width, img.height, img.channels), 1.0, std::nullopt};
    double sq = 0.0;
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        const double d = img.data[i] - target->data[i];
        resp.grad.data[i] = 2.0 * d;
        sq += d * d;
    }
    resp.loss = img.data.empty() ? 0.0 : sq / static_cast<double>(img.data.size());
    return resp;
}

std::unique_ptr<OracleGuidance> OracleGuidance::from_cloud(GaussianCloud target, RenderOptions opts) {
    return std::make_unique<OracleGuidance>(
        [cloud = std::move(target), opts](const Camera& cam, int component_id) -> std::optional<Image> {
            std::optional<int> subset;
            if (component_id != 0) {
                if (cloud.count_component(component_id) == 0) return std::nullopt;
                subset = component_id;
            }
            return render(cloud, cam, subset, opts).pixels;
        });
}

std::unique_ptr<OracleGuidance> OracleGuidance::from_images(std::map<int, Image> targets) {
    return std::make_unique<OracleGuidance>(
        [t = std::move(targets)](const Camera&, int component_id) -> std::optional<Image> {
            auto it = t.find(component_id);
            if (it == t.end()) return std::nullopt;
            return it->second;
        });
}

GuidanceResponse OracleGuidance::sds_grad(const GuidanceRequest& req) {
    const auto target = targets_(req.camera, req.component_id);
    return oracle_guidance(req, target ? &*target : nullptr);
}

namespace wire {

std::string base64_encode(std::string_view bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::string base64_decode(std::string_view text) {
    if (text.size() % 4 != 0) throw FormatError("base64 length is not a multiple of 4");
    std::string out(3 * text.size() / 4, '\0');
    const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
    if (n < 0) throw FormatError("invalid base64 payload");
    std::size_t pad = 0;
    if (!text.empty() && text.back() == '=') ++pad;
    if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

std::string encode_float_image(const Image& img) {
    std::string raw(img.data.size() * sizeof(float), '\0');
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        const float v = static_cast<float>(img.data[i]);
        std::memcpy(raw.data() + i * sizeof(float), &v, sizeof(float));
    }
    return base64_encode(raw);
}

Image decode_float_image(const std::string& b64, int width, int height, int channels) {
    const std::string raw = base64_decode(b64);
    Image img(width, height, channels);
    if (raw.size() != img.data.size() * sizeof(float))
        throw FormatError("float payload holds " + std::to_string(raw.size()) + " bytes, expected " +
                          std::to_string(img.data.size() * sizeof(float)));
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        float v;
        std::memcpy(&v, raw.data() + i * sizeof(float), sizeof(float));
        img.data[i] = v;
    }
    return img;
}

json sds_request(std::uint64_t id, const GuidanceRequest& req) {
    json msg = {{"id", id},
                {"op", "sds_grad"},
                {"prompt", req.prompt},
                {"image_b64", encode_float_image(req.image.pixels)},
                {"width", req.image.width()},
                {"height", req.image.height()},
                {"seed", req.seed},
                {"component_id", req.component_id}};
    if (req.timestep) msg["t"] = *req.timestep;
    return msg;
}

GuidanceResponse sds_response(const json& msg, int width, int height) {
    try {
        GuidanceResponse resp;
        resp.grad = decode_float_image(msg.at("grad_b64").get<std::string>(), width, height, 3);
        resp.weight = msg.value("weight", 1.0);
        if (msg.contains("loss") && msg["loss"].is_number()) resp.loss = msg["loss"].get<double>();
        for (double v : resp.grad.data)
            if (!std::isfinite(v)) throw FormatError("gradient contains non-finite values");
        return resp;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed sds_grad reply: ") + e.what());
    }
}

} // namespace wire

ExternalGuidance::ExternalGuidance(std::string command) : command_(std::move(command)) { start(); }

ExternalGuidance::~ExternalGuidance() { stop(); }

void ExternalGuidance::start() {
    std::signal(SIGPIPE, SIG_IGN);
    int in_pipe[2], out_pipe[2];
    if (pipe(in_pipe) != 0) throw ProviderFailure("pipe() failed");
    if (pipe(out_pipe) != 0) {
        close(in_pipe[0]);
        close(in_pipe[1]);
        throw ProviderFailure("pipe() failed");
    }
    const pid_t pid = fork();
    if (pid < 0) throw ProviderFailure("fork() failed");
    if (pid == 0) {
        dup2(in_pipe[0], STDIN_FILENO);
        dup2(out_pipe[1], STDOUT_FILENO);
        close(in_pipe[0]);
        close(in_pipe[1]);
        close(out_pipe[0]);
        close(out_pipe[1]);
        execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    close(in_pipe[0]);
    close(out_pipe[1]);
    fcntl(in_pipe[1], F_SETFD, FD_CLOEXEC);
    fcntl(out_pipe[0], F_SETFD, FD_CLOEXEC);
    pid_ = pid;
    to_child_ = in_pipe[1];
    from_child_ = fdopen(out_pipe[0], "r");
}

void ExternalGuidance::stop() {
    if (to_child_ >= 0) close(to_child_);
    if (from_child_) std::fclose(from_child_);
    to_child_ = -1;
    from_child_ = nullptr;
    if (pid_ > 0) {
        int status = 0;
        waitpid(pid_, &status, 0);
        pid_ = -1;
    }
}

json ExternalGuidance::call(json request) {
    if (to_child_ < 0 || !from_child_) throw ProviderFailure("provider process is not running");
    const std::uint64_t id = next_id_++;
    request["id"] = id;
    const std::string line = request.dump() + "\n";
    std::size_t sent = 0;
    while (sent < line.size()) {
        const ssize_t n = write(to_child_, line.data() + sent, line.size() - sent);
        if (n <= 0) throw ProviderFailure("cannot write to provider '" + command_ + "'");
        sent += static_cast<std::size_t>(n);
    }

    std::string reply;
    char buf[65536];
    while (true) {
        if (!std::fgets(buf, sizeof(buf), from_child_))
            throw ProviderFailure("provider '" + command_ + "' closed its output");
        reply += buf;
        if (!reply.empty() && reply.back() == '\n') break;
    }
    json msg;
    try {
        msg = json::parse(reply);
    } catch (const json::exception& e) {
        throw ProviderFailure(std::string("provider sent invalid JSON: ") + e.what());
    }
    if (!msg.is_object() || msg.value("id", std::uint64_t{0}) != id)
        throw ProviderFailure("provider reply does not echo request id " + std::to_string(id));
    if (msg.contains("error")) throw ProviderFailure("provider error: " + msg["error"].dump());
    return msg;
}

GuidanceResponse ExternalGuidance::sds_grad(const GuidanceRequest& req) {
    const json reply = call(wire::sds_request(0, req));
    try {
        return wire::sds_response(reply, req.image.width(), req.image.height());
    } catch (const FormatError& e) {
        throw ProviderFailure(e.what());
    }
}

Image ExternalGuidance::segment(const Image& rgb) {
    const json reply = call({{"op", "segment"}, {"image_b64", wire::base64_encode(encode_png(rgb))}});
    try {
        return decode_hmap(wire::base64_decode(reply.at("heatmap_b64").get<std::string>()));
    } catch (const std::exception& e) {
        throw ProviderFailure(std::string("malformed segment reply: ") + e.what());
    }
}

double ExternalGuidance::clip_score(const Image& rgb, const std::string& prompt) {
    const json reply =
        call({{"op", "clip_score"}, {"prompt", prompt}, {"image_b64", wire::base64_encode(encode_png(rgb))}});
    if (!reply.contains("score") || !reply["score"].is_number()) throw ProviderFailure("clip_score reply has no score");
    return reply["score"].get<double>();
}

Image ExternalGuidance::stylize(const Image& printed, const std::string& prompt, double alpha, int k,
                                std::uint64_t seed) {
    const json reply = call({{"op", "stylize"},
                             {"prompt", prompt},
                             {"alpha", alpha},
                             {"K", k},
                             {"seed", seed},
                             {"image_b64", wire::base64_encode(encode_png(printed))}});
    try {
        return decode_png(wire::base64_decode(reply.at("image_b64").get<std::string>()));
    } catch (const std::exception& e) {
        throw ProviderFailure(std::string("malformed stylize reply: ") + e.what());
    }
}

} // namespace splatfont
