#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "rival/image.hpp"
#include "rival/pipeline.hpp"
#include "rival/rng.hpp"

namespace rival {

// k colors in [0,1]^3 RGB.
using PaletteColor = std::array<double, 3>;
struct Palette {
    std::vector<PaletteColor> colors;
};

// Seeded k-means over the image's RGB triples scaled to [0,1].
//
// Pinned procedure (the test oracle re-derives it step for step):
//   - k-means++ seeding: first center uniform via rng.bounded(n); each
//     further center sampled proportionally to squared distance from the
//     nearest chosen center using rng.next_double() on the cumulative sum.
//   - Lloyd iterations with squared-Euclidean assignment, ties to the
//     lowest center index; stop after `iters` rounds or zero reassignments.
//   - An empty cluster is re-seeded from the point farthest from its
//     assigned center (ties to the lowest point index).
Palette kmeans_palette(const Raster& image, int k, SeededRng& rng,
                       int iters = 50);

// Minimum-cost perfect matching between the two color sets under L1 color
// distance (Hungarian algorithm); returns the total cost.
double palette_distance(const Palette& p, const Palette& q);

// Exact solver used by palette_distance: cost is row-major n x n.
double hungarian_min_cost(const std::vector<double>& cost, int n,
                          std::vector<int>* assignment = nullptr);

struct TracePoint {
    int step = 0;
    double value = 0.0;
};
struct TraceSeries {
    std::vector<TracePoint> points;  // generation order, t = T..1
};

// Per-step kl_gaussian_fit(X_G^t, X_R^t); steps with a degenerate fit are
// omitted.
TraceSeries kl_trace(const RunDiagnostics& diag, const ChainRecord& chain);

// Per-step reference attention mass at the bottleneck (deepest) site;
// Replace-mode steps report 0.5 by convention, Off-mode steps 0.
TraceSeries score_trace(const RunDiagnostics& diag);

// CSV with header "step,value", one row per point.
std::string trace_to_csv(const TraceSeries& series);
void save_trace_csv(const std::filesystem::path& path,
                    const TraceSeries& series);

// One "r g b" line per color, 6 decimal places.
std::string palette_to_text(const Palette& p);

}  // namespace rival
