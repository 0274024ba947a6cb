#pragma once

#include <string>

#include "stereo/image.hpp"

namespace stereo {

// 8-bit PNG. Color images are written from [0,1] floats (clamped, rounded);
// gray masks map 0/1 to 0/255.
void write_png(const std::string& path, const Image& im);
Image read_png(const std::string& path);  // returns 1 or 3 channels, [0,1]

// PFM, grayscale "Pf" variant: dims line, negative scale for little-endian
// payload, rows stored bottom-up. Float values round-trip bit-exactly.
void write_pfm(const std::string& path, const Image& disparity);
Image read_pfm(const std::string& path);

// Color-mapped disparity rendering for quick inspection.
Image colorize_disparity(const Image& disparity, float vmin, float vmax);

}  // namespace stereo
