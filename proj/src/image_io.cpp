#include "splatfont/image_io.hpp"

#include "splatfont/error.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace splatfont {

namespace {

std::uint8_t to_byte(double v) {
    if (!(v > 0.0)) return 0;
    if (v >= 1.0) return 255;
    return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

} // namespace

std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("failed writing '" + path.string() + "'");
}

namespace {

Image finish_png_read(png_image& png, const std::string& what) {
    int channels = 3;
    if (png.format & PNG_FORMAT_FLAG_ALPHA) channels = 4;
    else if (!(png.format & PNG_FORMAT_FLAG_COLOR)) channels = 1;
    png.format = channels == 1 ? PNG_FORMAT_GRAY : channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_RGBA;

    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
        const std::string msg = png.message;
        png_image_free(&png);
        throw IoError("cannot decode PNG " + what + ": " + msg);
    }
    Image img(static_cast<int>(png.width), static_cast<int>(png.height), channels);
    for (std::size_t i = 0; i < buf.size(); ++i) img.data[i] = buf[i] / 255.0;
    return img;
}

png_image make_write_header(const Image& img, std::vector<std::uint8_t>& buf) {
    if (img.channels != 1 && img.channels != 3 && img.channels != 4)
        throw FormatError("PNG export needs 1, 3 or 4 channels");
    buf.resize(img.data.size());
    std::transform(img.data.begin(), img.data.end(), buf.begin(), to_byte);
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(img.width);
    png.height = static_cast<png_uint_32>(img.height);
    png.format = img.channels == 1 ? PNG_FORMAT_GRAY : img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_RGBA;
    return png;
}

} // namespace

Image read_png(const std::filesystem::path& path) {
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str()))
        throw IoError("cannot read PNG '" + path.string() + "': " + png.message);
    return finish_png_read(png, "'" + path.string() + "'");
}

Image decode_png(const std::string& bytes) {
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size()))
        throw FormatError(std::string("cannot read PNG from memory: ") + png.message);
    return finish_png_read(png, "from memory");
}

std::string encode_png(const Image& img) {
    std::vector<std::uint8_t> buf;
    png_image png = make_write_header(img, buf);
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&png, nullptr, &size, 0, buf.data(), 0, nullptr))
        throw FormatError(std::string("cannot size PNG: ") + png.message);
    std::string out(size, '\0');
    if (!png_image_write_to_memory(&png, out.data(), &size, 0, buf.data(), 0, nullptr))
        throw FormatError(std::string("cannot encode PNG: ") + png.message);
    out.resize(size);
    return out;
}

void write_png(const std::filesystem::path& path, const Image& img) {
    std::vector<std::uint8_t> buf;
    png_image png = make_write_header(img, buf);
    if (!png_image_write_to_file(&png, path.c_str(), 0, buf.data(), 0, nullptr))
        throw IoError("cannot write PNG '" + path.string() + "': " + png.message);
}

void write_render_png(const std::filesystem::path& path, const RenderedImage& img,
                      const std::array<double, 3>& background) {
    Image rgba(img.width(), img.height(), 4);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            const double a = img.alpha.at(x, y);
            for (int k = 0; k < 3; ++k) {
                const double c = img.pixels.at(x, y, k);
                rgba.at(x, y, k) = a > 0.0 ? (c - (1.0 - a) * background[k]) / a : background[k];
            }
            rgba.at(x, y, 3) = a;
        }
    }
    write_png(path, rgba);
}

void write_indexed_png(const std::filesystem::path& path, int width, int height,
                       const std::vector<std::uint8_t>& indices,
                       const std::vector<std::array<std::uint8_t, 3>>& palette) {
    if (indices.size() != static_cast<std::size_t>(width) * height) throw ShapeMismatch("index buffer size");
    if (palette.empty() || palette.size() > 256) throw FormatError("palette must hold 1..256 entries");
    std::vector<std::uint8_t> colormap;
    for (const auto& c : palette) colormap.insert(colormap.end(), c.begin(), c.end());
    for (auto i : indices)
        if (i >= palette.size()) throw FormatError("palette index out of range");

    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(width);
    png.height = static_cast<png_uint_32>(height);
    png.format = PNG_FORMAT_RGB_COLORMAP;
    png.colormap_entries = static_cast<png_uint_32>(palette.size());
    if (!png_image_write_to_file(&png, path.c_str(), 0, indices.data(), 0, colormap.data()))
        throw IoError("cannot write PNG '" + path.string() + "': " + png.message);
}

std::string encode_hmap(const Image& heat) {
    if (heat.channels != 1) throw FormatError("heatmaps are single-channel");
    std::string out = "HMAP";
    const std::uint32_t dims[2] = {static_cast<std::uint32_t>(heat.width), static_cast<std::uint32_t>(heat.height)};
    out.append(reinterpret_cast<const char*>(dims), sizeof(dims));
    const std::size_t body = out.size();
    out.resize(body + heat.data.size() * sizeof(float));
    for (std::size_t i = 0; i < heat.data.size(); ++i) {
        const float v = static_cast<float>(heat.data[i]);
        std::memcpy(out.data() + body + i * sizeof(float), &v, sizeof(float));
    }
    return out;
}

Image decode_hmap(const std::string& bytes) {
    if (bytes.size() < 12 || bytes.compare(0, 4, "HMAP") != 0) throw FormatError("missing HMAP magic");
    std::uint32_t dims[2];
    std::memcpy(dims, bytes.data() + 4, sizeof(dims));
    const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1];
    if (bytes.size() != 12 + n * sizeof(float))
        throw FormatError("HMAP body size does not match " + std::to_string(dims[0]) + "x" + std::to_string(dims[1]));
    Image heat(static_cast<int>(dims[0]), static_cast<int>(dims[1]), 1);
    for (std::size_t i = 0; i < n; ++i) {
        float v;
        std::memcpy(&v, bytes.data() + 12 + i * sizeof(float), sizeof(float));
        heat.data[i] = v;
    }
    return heat;
}

void write_hmap(const std::filesystem::path& path, const Image& heat) { write_file(path, encode_hmap(heat)); }

Image read_heatmap(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    if (bytes.size() >= 4 && bytes.compare(0, 4, "HMAP") == 0) return decode_hmap(bytes);
    Image img = read_png(path);
    if (img.channels == 1) return img;
    Image heat(img.width, img.height, 1);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) heat.data[i] = img.data[i * img.channels];
    return heat;
}

} // namespace splatfont
