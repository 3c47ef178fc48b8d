#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "usegmix/raster.hpp"

namespace usegmix {

/// PNG (any bit depth / color type, converted to 8-bit RGB) or baseline JPEG.
/// Throws DecodeError naming the byte offset where decoding stopped.
ImageRGB decode_image(std::span<const std::uint8_t> bytes);

/// Decodes a mask PNG: luminance >= 128 is inside.
BitMask decode_mask(std::span<const std::uint8_t> bytes);

/// Lossless 8-bit RGB PNG.
std::vector<std::uint8_t> encode_png(const ImageRGB& img);
/// 8-bit grayscale PNG with 0 = outside, 255 = inside.
std::vector<std::uint8_t> encode_png(const BitMask& mask);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

ImageRGB load_image(const std::filesystem::path& path);
BitMask load_mask(const std::filesystem::path& path);
void save_png(const std::filesystem::path& path, const ImageRGB& img);
void save_png(const std::filesystem::path& path, const BitMask& mask);

}  // namespace usegmix
