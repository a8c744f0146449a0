#pragma once

#include "splatfont/image.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace splatfont {

/// Loads an 8/16-bit PNG as values in [0,1]. Channels: 1 (gray), 3 (RGB) or 4 (RGBA).
Image read_png(const std::filesystem::path& path);

/// Writes 1, 3 or 4 channel images as 8-bit PNG; values are clamped to [0,1].
void write_png(const std::filesystem::path& path, const Image& img);

/// In-memory PNG codec, same conventions as read_png / write_png.
std::string encode_png(const Image& img);
Image decode_png(const std::string& bytes);

/// RGBA PNG of a render. RGB is un-premultiplied (straight alpha) against the
/// background the render was composited over; fully transparent pixels keep the background.
void write_render_png(const std::filesystem::path& path, const RenderedImage& img,
                      const std::array<double, 3>& background);

/// Palette-indexed PNG, one byte per pixel.
void write_indexed_png(const std::filesystem::path& path, int width, int height,
                       const std::vector<std::uint8_t>& indices,
                       const std::vector<std::array<std::uint8_t, 3>>& palette);

/// Raw float32 heatmap: "HMAP", u32 width, u32 height (little endian), then row-major floats.
std::string encode_hmap(const Image& heat);
Image decode_hmap(const std::string& bytes);
void write_hmap(const std::filesystem::path& path, const Image& heat);

/// Reads a single-channel heatmap from an HMAP file or a PNG (value/255, first channel).
Image read_heatmap(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

} // namespace splatfont
