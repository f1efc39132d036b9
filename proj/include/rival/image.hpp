#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "rival/latent.hpp"

namespace rival {

// 8-bit RGB raster, row-major, 3 bytes per pixel.
struct Raster {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    Raster() = default;
    Raster(int w, int h)
        : width(w), height(h),
          pixels(static_cast<std::size_t>(w) * h * 3, 0) {}

    std::size_t pixel_count() const {
        return static_cast<std::size_t>(width) * height;
    }
};

// PNG in/out, 8-bit RGB only; anything else is a FormatError. Saves are
// atomic and lossless.
Raster load_png(const std::filesystem::path& path);
void save_png(const std::filesystem::path& path, const Raster& image);

// Identity pixel codec standing in for a learned latent space: linear map
// [0,255] -> [-1,1] per channel; decode clamps to [-1,1] then inverts.
LatentTensor encode_latent(const Raster& image);
Raster decode_latent(const LatentTensor& x);

}  // namespace rival
