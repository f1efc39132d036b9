#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "rival/rng.hpp"

namespace rival {

// Dense C x H x W tensor of doubles, row-major (channel, row, col).
// Carries noisy latents, clean latents and noise predictions alike.
struct LatentTensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    LatentTensor() = default;
    LatentTensor(int c, int h, int w)
        : channels(c), height(h), width(w),
          data(static_cast<std::size_t>(c) * h * w, 0.0) {}

    std::size_t size() const { return data.size(); }
    std::size_t spatial_size() const {
        return static_cast<std::size_t>(height) * width;
    }

    double& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }

    bool same_shape(const LatentTensor& other) const {
        return channels == other.channels && height == other.height &&
               width == other.width;
    }
    bool all_finite() const;
};

// Per-channel first and second moments, population convention (divisor N).
struct LatentStats {
    std::vector<double> mean;
    std::vector<double> stddev;
};

// Per-channel mean/std over all spatial positions. Summation is
// order-canonical (values sorted before accumulation), so any spatial
// permutation of x yields bit-identical moments.
LatentStats stats(const LatentTensor& x);

// Mean/std over every element of the tensor, same order-canonical summation.
void global_fit(const LatentTensor& x, double& mean, double& stddev);

// Permutes the H*W spatial positions by a uniform random permutation;
// each position's full channel vector moves as a unit. The permutation is
// the Fisher-Yates walk i = n-1..1, j = rng.bounded(i+1), swap(i, j).
LatentTensor shuffle_spatial(const LatentTensor& x, SeededRng& rng);

// i.i.d. draws from Normal(mean[c], std[c]^2) per channel.
LatentTensor sample_adaptive_gaussian(const LatentStats& s, int channels,
                                      int height, int width, SeededRng& rng);

// i.i.d. standard normal elements.
LatentTensor sample_standard_gaussian(int channels, int height, int width,
                                      SeededRng& rng);

// Renormalizes a channel-wise to b's moments:
//   out[c] = std_b[c] * (a[c] - mean_a[c]) / std_a[c] + mean_b[c]
// Channels of a with zero std pass through with divisor 1 and a warning.
LatentTensor adain(const LatentTensor& a, const LatentTensor& b);

// Fits one Gaussian to each tensor's elements and returns the closed-form
// KL(N_a || N_b) = log(sb/sa) + (sa^2 + (ma-mb)^2) / (2 sb^2) - 1/2.
double kl_gaussian_fit(const LatentTensor& a, const LatentTensor& b);

// Flat binary codec: magic "RIVL", u32 version, u32 C,H,W, then C*H*W
// little-endian doubles. Saves are atomic (temp file + rename).
void save_latent(const std::filesystem::path& path, const LatentTensor& x);
LatentTensor load_latent(const std::filesystem::path& path);

}  // namespace rival
