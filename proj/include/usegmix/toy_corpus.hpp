#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "usegmix/raster.hpp"

namespace usegmix {

/// Small geometric stand-ins for tissue patches: flat-colored shapes on a
/// flat background with mild per-pixel noise. Class "blobs" holds discs,
/// "tiles" rectangles, "bands" horizontal stripes of varying thickness.
ImageRGB make_toy_image(const std::string& class_label, int size, std::uint64_t seed);

std::vector<std::string> toy_classes();

/// Writes `<root>/<class>/img<k>.png` for the first `classes` toy classes.
void write_toy_corpus(const std::filesystem::path& root, int classes, int per_class, int size, std::uint64_t seed);

}  // namespace usegmix
