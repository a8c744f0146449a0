#pragma once

#include "splatfont/gaussian.hpp"

#include <filesystem>
#include <string>

namespace splatfont {

/// Binary little-endian PLY with float properties x y z, f_dc_0..2 (colour),
/// opacity (logit), scale_0..2 (log), rot_0..3 (wxyz) and an int component_id.
void write_ply(const std::filesystem::path& path, const GaussianCloud& cloud);
std::string encode_ply(const GaussianCloud& cloud);

/// Accepts any property order and ignores unknown properties. A missing
/// component_id column leaves every Gaussian unassigned.
GaussianCloud read_ply(const std::filesystem::path& path);
GaussianCloud decode_ply(const std::string& bytes);

} // namespace splatfont
