#pragma once

#include "deltarad/volgrid.hpp"

namespace deltarad {

/// CT display window: intensities in [level - width/2, level + width/2]
/// map linearly onto [0, 1].
struct WindowSpec {
    double level = 40.0;  // brain window defaults
    double width = 80.0;
};

struct ClaheSpec {
    int tiles_x = 8;
    int tiles_y = 8;
    double clip_limit = 2.0;  // multiple of the mean bin height, > 1
    int bins = 256;
};

/// out = clamp((x - (level - width/2)) / width, 0, 1)
Volume window(const Volume& v, const WindowSpec& w);

/// Slice-wise (axial, per z) contrast-limited adaptive histogram
/// equalization. Tile mappings are clipped-histogram CDFs with the excess
/// redistributed; per-voxel output bilinearly blends the four nearest tile
/// mappings. Constant slices pass through as mid-gray 0.5.
Volume clahe(const Volume& v, const ClaheSpec& spec);

/// Each voxel replaced by the median of its (2r+1)^3 edge-clamped
/// neighborhood.
Volume denoise_median(const Volume& v, int radius);

}  // namespace deltarad
