#include "splatfont/error.hpp"
#include "splatfont/guidance.hpp"
#include "splatfont/image_io.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <cstring>

using namespace splatfont;
using namespace splatfont::testing;

namespace {

std::string sidecar(const std::string& mode) {
    const char* dir = std::getenv("SPLATFONT_TEST_DATA");
    const std::string root = dir ? dir : "tests";
    return "python3 " + root + "/mock_sidecar.py " + mode;
}

GuidanceRequest small_request() {
    GuidanceRequest req;
    req.image.pixels = Image(3, 2, 3);
    req.image.alpha = Image(3, 2, 1, 1.0);
    for (std::size_t i = 0; i < req.image.pixels.data.size(); ++i) req.image.pixels.data[i] = 0.125 * i;
    req.prompt = "a red serif";
    req.seed = 42;
    req.component_id = 2;
    return req;
}

} // namespace

TEST(Base64, KnownVectors) {
    // RFC 4648 test vectors.
    const std::pair<const char*, const char*> cases[] = {
        {"", ""}, {"f", "Zg=="}, {"fo", "Zm8="}, {"foo", "Zm9v"}, {"foob", "Zm9vYg=="}, {"foobar", "Zm9vYmFy"}};
    for (auto [plain, enc] : cases) {
        EXPECT_EQ(wire::base64_encode(plain), enc);
        EXPECT_EQ(wire::base64_decode(enc), plain);
    }
    std::string bin(300, '\0');
    for (int i = 0; i < 300; ++i) bin[i] = static_cast<char>(i * 7);
    EXPECT_EQ(wire::base64_decode(wire::base64_encode(bin)), bin);
    EXPECT_THROW(wire::base64_decode("Zm9v!"), FormatError);
}

TEST(FloatImage, LittleEndianFloat32Layout) {
    Image img(2, 1, 3);
    img.data = {1.0, -2.0, 0.5, 0.25, 3.0, 0.0};
    const std::string raw = wire::base64_decode(wire::encode_float_image(img));
    ASSERT_EQ(raw.size(), 24u);
    const unsigned char one[4] = {0x00, 0x00, 0x80, 0x3f}; // 1.0f
    EXPECT_EQ(std::memcmp(raw.data(), one, 4), 0);
    EXPECT_EQ(wire::decode_float_image(wire::encode_float_image(img), 2, 1, 3).data, img.data);
    EXPECT_THROW(wire::decode_float_image(wire::encode_float_image(img), 3, 1, 3), FormatError);
}

TEST(WireMessages, SdsRequestFields) {
    GuidanceRequest req = small_request();
    nlohmann::json msg = wire::sds_request(9, req);
    EXPECT_EQ(msg["id"], 9);
    EXPECT_EQ(msg["op"], "sds_grad");
    EXPECT_EQ(msg["prompt"], "a red serif");
    EXPECT_EQ(msg["width"], 3);
    EXPECT_EQ(msg["height"], 2);
    EXPECT_EQ(msg["seed"], 42);
    EXPECT_EQ(msg["component_id"], 2);
    EXPECT_FALSE(msg.contains("t"));
    req.timestep = 500;
    EXPECT_EQ(wire::sds_request(9, req)["t"], 500);
}

TEST(WireMessages, SdsResponseValidation) {
    Image g(3, 2, 3, 0.5);
    nlohmann::json msg = {{"id", 1}, {"grad_b64", wire::encode_float_image(g)}, {"weight", 0.25}};
    const GuidanceResponse r = wire::sds_response(msg, 3, 2);
    EXPECT_EQ(r.grad.data, g.data);
    EXPECT_EQ(r.weight, 0.25);
    EXPECT_FALSE(r.loss.has_value());
    EXPECT_THROW(wire::sds_response(msg, 2, 2), FormatError);
    EXPECT_THROW(wire::sds_response({{"id", 1}}, 3, 2), FormatError);
    g.data[3] = std::numeric_limits<double>::infinity();
    msg["grad_b64"] = wire::encode_float_image(g);
    EXPECT_THROW(wire::sds_response(msg, 3, 2), FormatError);
}

TEST(ExternalGuidance, AllOperationsAgainstMockSidecar) {
    ExternalGuidance ext(sidecar("ok"));
    GuidanceRequest req = small_request();
    GuidanceResponse r = ext.sds_grad(req);
    ASSERT_TRUE(r.grad.same_shape(req.image.pixels));
    for (std::size_t i = 0; i < r.grad.data.size(); ++i)
        EXPECT_EQ(r.grad.data[i], static_cast<double>(2.0f * (static_cast<float>(req.image.pixels.data[i]) - 0.25f)));
    EXPECT_EQ(r.weight, 0.5);
    EXPECT_EQ(r.loss, 2.0); // component id echoed
    req.timestep = 321;
    EXPECT_EQ(ext.sds_grad(req).loss, 321.0);

    const Image h = ext.segment(Image(4, 3, 3, 1.0));
    ASSERT_EQ(h.width, 4);
    ASSERT_EQ(h.height, 3);
    EXPECT_NEAR(h.at(3, 2), 11.0 / 12.0, 1e-7);

    EXPECT_NEAR(ext.clip_score(Image(4, 4, 3, 0.5), "abcd"), 0.04, 1e-12);

    Image printed(5, 4, 3, 0.0);
    printed.at(2, 1, 0) = 1.0;
    const Image styl = ext.stylize(printed, "gold", 0.7, 300, 9);
    EXPECT_EQ(styl.width, 5);
    EXPECT_EQ(styl.at(2, 1, 0), 1.0);
}

TEST(ExternalGuidance, FailuresBecomeProviderFailure) {
    const GuidanceRequest req = small_request();
    for (const char* mode : {"error", "badid", "die", "nan", "garbage"}) {
        ExternalGuidance ext(sidecar(mode));
        EXPECT_THROW(ext.sds_grad(req), ProviderFailure) << mode;
    }
    ExternalGuidance missing("/nonexistent/sidecar-binary");
    EXPECT_THROW(missing.sds_grad(req), ProviderFailure);
}

TEST(ExternalGuidance, DrivesOptimiserStepLikeOracle) {
    // The mock's gradient is the oracle gradient against a flat 0.25 target.
    ExternalGuidance ext(sidecar("ok"));
    auto oracle = OracleGuidance::from_images({{2, Image(3, 2, 3, 0.25)}});
    const GuidanceRequest req = small_request();
    const GuidanceResponse a = ext.sds_grad(req), b = oracle->sds_grad(req);
    for (std::size_t i = 0; i < a.grad.data.size(); ++i) EXPECT_NEAR(a.grad.data[i], b.grad.data[i], 1e-6);
}
