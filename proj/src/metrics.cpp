#include "rival/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

#include "rival/errors.hpp"
#include "rival/fsutil.hpp"

namespace rival {

namespace {

double sq_dist(const PaletteColor& a, const PaletteColor& b) {
    double s = 0.0;
    for (int i = 0; i < 3; ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

}  // namespace

Palette kmeans_palette(const Raster& image, int k, SeededRng& rng, int iters) {
    const std::size_t n = image.pixel_count();
    if (n == 0) throw InvalidInputError("kmeans_palette: empty image");
    if (k <= 0) throw InvalidInputError("kmeans_palette: k must be positive");

    std::vector<PaletteColor> points(n);
    for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c)
            points[i][c] = image.pixels[i * 3 + c] / 255.0;

    std::size_t distinct = 1;
    {
        std::vector<PaletteColor> sorted(points);
        std::sort(sorted.begin(), sorted.end());
        distinct = static_cast<std::size_t>(
            std::unique(sorted.begin(), sorted.end()) - sorted.begin());
    }
    if (distinct < static_cast<std::size_t>(k))
        warn("kmeans_palette: fewer distinct colors (" +
             std::to_string(distinct) + ") than clusters (" +
             std::to_string(k) + "); duplicate centroids expected");

    // k-means++ seeding
    std::vector<PaletteColor> centers;
    centers.reserve(k);
    centers.push_back(points[rng.bounded(n)]);
    std::vector<double> best(n);
    while (centers.size() < static_cast<std::size_t>(k)) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double d = std::numeric_limits<double>::infinity();
            for (const PaletteColor& c : centers)
                d = std::min(d, sq_dist(points[i], c));
            best[i] = d;
            total += d;
        }
        if (total == 0.0) {
            centers.push_back(points[rng.bounded(n)]);
            continue;
        }
        double u = rng.next_double() * total;
        double cum = 0.0;
        std::size_t pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
            cum += best[i];
            if (u < cum) {
                pick = i;
                break;
            }
        }
        centers.push_back(points[pick]);
    }

    // Lloyd iterations
    std::vector<int> assign(n, -1);
    for (int round = 0; round < iters; ++round) {
        std::size_t changed = 0;
        for (std::size_t i = 0; i < n; ++i) {
            int bi = 0;
            double bd = sq_dist(points[i], centers[0]);
            for (int c = 1; c < k; ++c) {
                double d = sq_dist(points[i], centers[c]);
                if (d < bd) {
                    bd = d;
                    bi = c;
                }
            }
            if (assign[i] != bi) {
                assign[i] = bi;
                ++changed;
            }
        }

        std::vector<PaletteColor> sums(k, PaletteColor{0, 0, 0});
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            for (int c = 0; c < 3; ++c) sums[assign[i]][c] += points[i][c];
            ++counts[assign[i]];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // farthest point from its assigned center takes over
                double worst = -1.0;
                std::size_t worst_i = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    double d = sq_dist(points[i], centers[assign[i]]);
                    if (d > worst) {
                        worst = d;
                        worst_i = i;
                    }
                }
                centers[c] = points[worst_i];
                continue;
            }
            for (int ch = 0; ch < 3; ++ch)
                centers[c][ch] = sums[c][ch] / static_cast<double>(counts[c]);
        }
        if (changed == 0 && round > 0) break;
    }

    Palette p;
    p.colors = std::move(centers);
    return p;
}

double hungarian_min_cost(const std::vector<double>& cost, int n,
                          std::vector<int>* assignment) {
    // Potential-based shortest augmenting path, O(n^3), 1-based internals.
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            int i0 = p[j0], j1 = 0;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur =
                    cost[static_cast<std::size_t>(i0 - 1) * n + (j - 1)] -
                    u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    double total = 0.0;
    for (int j = 1; j <= n; ++j) {
        if (assignment) {
            if (static_cast<int>(assignment->size()) != n)
                assignment->assign(n, -1);
            if (p[j]) (*assignment)[p[j] - 1] = j - 1;
        }
        if (p[j])
            total += cost[static_cast<std::size_t>(p[j] - 1) * n + (j - 1)];
    }
    return total;
}

double palette_distance(const Palette& p, const Palette& q) {
    const int n = static_cast<int>(p.colors.size());
    if (n != static_cast<int>(q.colors.size()))
        throw InvalidInputError("palette_distance: size mismatch");
    if (n == 0) return 0.0;
    std::vector<double> cost(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double l1 = 0.0;
            for (int c = 0; c < 3; ++c)
                l1 += std::abs(p.colors[i][c] - q.colors[j][c]);
            cost[static_cast<std::size_t>(i) * n + j] = l1;
        }
    return hungarian_min_cost(cost, n);
}

TraceSeries kl_trace(const RunDiagnostics& diag, const ChainRecord& chain) {
    TraceSeries series;
    for (const StepDiagnostics& step : diag.steps) {
        if (step.step < 0 || step.step >= chain.levels())
            throw InvalidInputError("kl_trace: step outside chain range");
        if (static_cast<std::size_t>(step.step) >= diag.gen_latents.size())
            throw InvalidInputError("kl_trace: missing generation latent");
        try {
            double v = kl_gaussian_fit(diag.gen_latents[step.step],
                                       chain.latents[step.step]);
            series.points.push_back({step.step, v});
        } catch (const DegenerateDistributionError&) {
            warn("kl_trace: degenerate fit at step " +
                 std::to_string(step.step) + ", omitted");
        }
    }
    return series;
}

TraceSeries score_trace(const RunDiagnostics& diag) {
    TraceSeries series;
    for (const StepDiagnostics& step : diag.steps) {
        double value = 0.0;
        switch (step.mode) {
            case InjectionMode::Off:
                value = 0.0;
                break;
            case InjectionMode::Replace:
                value = 0.5;  // early-fusion convention for replaced KV
                break;
            case InjectionMode::Fuse:
                value = step.score_ref.empty()
                            ? 0.0
                            : step.score_ref.rbegin()->second;
                break;
        }
        series.points.push_back({step.step, value});
    }
    return series;
}

std::string trace_to_csv(const TraceSeries& series) {
    std::string out = "step,value\n";
    char buf[64];
    for (const TracePoint& p : series.points) {
        std::snprintf(buf, sizeof(buf), "%d,%.12g\n", p.step, p.value);
        out += buf;
    }
    return out;
}

void save_trace_csv(const std::filesystem::path& path,
                    const TraceSeries& series) {
    write_file_atomic(path, trace_to_csv(series));
}

std::string palette_to_text(const Palette& p) {
    std::string out;
    char buf[80];
    for (const PaletteColor& c : p.colors) {
        std::snprintf(buf, sizeof(buf), "%.6f %.6f %.6f\n", c[0], c[1], c[2]);
        out += buf;
    }
    return out;
}

}  // namespace rival
