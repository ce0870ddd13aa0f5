#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "vaudit/imaging.hpp"

namespace vaudit {

// 8-bit gray or RGB PNG interchange. Decoding maps u8 -> k/255; encoding
// rounds half-up. Alpha is dropped and 16-bit/palette inputs are normalized
// to 8-bit gray/RGB on load.

std::vector<std::uint8_t> encode_png(const Image& img);
Image decode_png(std::span<const std::uint8_t> bytes);

void save_png(const Image& img, const std::filesystem::path& path);
Image load_png(const std::filesystem::path& path);

/// Masks and edge maps are stored as 1-bit grayscale PNG (white = set).
std::vector<std::uint8_t> encode_mask_png(const BitRaster& bits);
void save_mask_png(const BitRaster& bits, const std::filesystem::path& path);
Mask load_mask_png(const std::filesystem::path& path);

}  // namespace vaudit
