#pragma once

#include "maskforge/raster.hpp"
#include "maskforge/segmenter.hpp"

#include <string>

namespace maskforge {

/// PNG files of any colour type are converted to 8-bit RGB. The id is the file stem.
RgbImage read_rgb_png(const std::string& path);
void write_rgb_png(const std::string& path, const RgbImage& image);

/// Nonzero pixels are foreground.
BinaryMask read_mask_png(const std::string& path);
/// Foreground written as 255.
void write_mask_png(const std::string& path, const BinaryMask& mask);

/// 8- or 16-bit greyscale; palette images are rejected because the simplified
/// reader does not preserve palette indices.
LabelMask read_label_png(const std::string& path);
/// 8-bit when every label fits, 16-bit otherwise. Labels must be non-negative.
void write_label_png(const std::string& path, const LabelMask& labels);

} // namespace maskforge
