#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "rival/metrics.hpp"

using namespace rival;

namespace {

Raster random_image(int w, int h, std::uint64_t seed) {
    SeededRng rng(seed);
    Raster img(w, h);
    for (auto& px : img.pixels)
        px = static_cast<std::uint8_t>(rng.bounded(256));
    return img;
}

Palette random_palette(int k, SeededRng& rng) {
    Palette p;
    for (int i = 0; i < k; ++i)
        p.colors.push_back({rng.next_double(), rng.next_double(),
                            rng.next_double()});
    return p;
}

double l1(const PaletteColor& a, const PaletteColor& b) {
    return std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]) +
           std::abs(a[2] - b[2]);
}

double brute_force_distance(const Palette& p, const Palette& q) {
    const int k = static_cast<int>(p.colors.size());
    std::vector<int> perm(k);
    for (int i = 0; i < k; ++i) perm[i] = i;
    double best = std::numeric_limits<double>::infinity();
    do {
        double cost = 0.0;
        for (int i = 0; i < k; ++i) cost += l1(p.colors[i], q.colors[perm[i]]);
        best = std::min(best, cost);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

// Textbook k-means++ / Lloyd oracle mirroring the documented procedure.
Palette lloyd_oracle(const Raster& image, int k, SeededRng& rng, int iters) {
    const std::size_t n = image.pixel_count();
    std::vector<PaletteColor> pts(n);
    for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) pts[i][c] = image.pixels[i * 3 + c] / 255.0;

    auto d2 = [](const PaletteColor& a, const PaletteColor& b) {
        double s = 0;
        for (int i = 0; i < 3; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
        return s;
    };

    std::vector<PaletteColor> centers{pts[rng.bounded(n)]};
    while (static_cast<int>(centers.size()) < k) {
        std::vector<double> dist(n);
        double total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centers) best = std::min(best, d2(pts[i], c));
            dist[i] = best;
            total += best;
        }
        if (total == 0) {
            centers.push_back(pts[rng.bounded(n)]);
            continue;
        }
        double u = rng.next_double() * total, cum = 0;
        std::size_t pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
            cum += dist[i];
            if (u < cum) {
                pick = i;
                break;
            }
        }
        centers.push_back(pts[pick]);
    }

    std::vector<int> assign(n, -1);
    for (int round = 0; round < iters; ++round) {
        std::size_t moved = 0;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double bd = d2(pts[i], centers[0]);
            for (int c = 1; c < k; ++c) {
                double dd = d2(pts[i], centers[c]);
                if (dd < bd) {
                    bd = dd;
                    best = c;
                }
            }
            if (assign[i] != best) {
                assign[i] = best;
                ++moved;
            }
        }
        std::vector<PaletteColor> sums(k, {0, 0, 0});
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            for (int c = 0; c < 3; ++c) sums[assign[i]][c] += pts[i][c];
            ++counts[assign[i]];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                double worst = -1;
                std::size_t wi = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    double dd = d2(pts[i], centers[assign[i]]);
                    if (dd > worst) {
                        worst = dd;
                        wi = i;
                    }
                }
                centers[c] = pts[wi];
                continue;
            }
            for (int ch = 0; ch < 3; ++ch) centers[c][ch] = sums[c][ch] / counts[c];
        }
        if (moved == 0 && round > 0) break;
    }
    Palette p;
    p.colors = centers;
    return p;
}

}  // namespace

TEST_CASE("kmeans_palette: single-color image collapses every centroid") {
    Raster img(6, 6);
    for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
        img.pixels[i] = 40;
        img.pixels[i + 1] = 90;
        img.pixels[i + 2] = 200;
    }
    SeededRng rng(5);
    Palette p = kmeans_palette(img, 4, rng);
    REQUIRE(p.colors.size() == 4);
    for (const auto& c : p.colors) {
        CHECK(c[0] == doctest::Approx(40.0 / 255).epsilon(1e-12));
        CHECK(c[1] == doctest::Approx(90.0 / 255).epsilon(1e-12));
        CHECK(c[2] == doctest::Approx(200.0 / 255).epsilon(1e-12));
    }
}

TEST_CASE("kmeans_palette: ten exact colors are a fixed point") {
    // 10 distinct colors, 16 pixels each
    std::vector<std::array<std::uint8_t, 3>> colors;
    for (int i = 0; i < 10; ++i)
        colors.push_back({static_cast<std::uint8_t>(20 * i + 5),
                          static_cast<std::uint8_t>(255 - 20 * i),
                          static_cast<std::uint8_t>(60 + 13 * i)});
    Raster img(16, 10);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 16; ++x)
            for (int c = 0; c < 3; ++c)
                img.pixels[(static_cast<std::size_t>(y) * 16 + x) * 3 + c] =
                    colors[y][c];

    SeededRng rng(17);
    Palette p = kmeans_palette(img, 10, rng);
    std::vector<PaletteColor> got = p.colors;
    std::sort(got.begin(), got.end());
    std::vector<PaletteColor> want;
    for (const auto& c : colors)
        want.push_back({c[0] / 255.0, c[1] / 255.0, c[2] / 255.0});
    std::sort(want.begin(), want.end());
    for (int i = 0; i < 10; ++i)
        for (int ch = 0; ch < 3; ++ch)
            CHECK(got[i][ch] == doctest::Approx(want[i][ch]).epsilon(1e-12));
}

TEST_CASE("kmeans_palette: matches the Lloyd oracle on a random image") {
    Raster img = random_image(24, 16, 99);
    SeededRng rng(123), oracle_rng(123);
    Palette got = kmeans_palette(img, 5, rng, 50);
    Palette want = lloyd_oracle(img, 5, oracle_rng, 50);
    REQUIRE(got.colors.size() == want.colors.size());
    for (std::size_t i = 0; i < got.colors.size(); ++i)
        for (int c = 0; c < 3; ++c)
            CHECK(std::abs(got.colors[i][c] - want.colors[i][c]) <= 1e-9);
}

TEST_CASE("kmeans_palette: deterministic under a fixed seed") {
    Raster img = random_image(12, 12, 3);
    SeededRng a(7), b(7);
    Palette pa = kmeans_palette(img, 6, a);
    Palette pb = kmeans_palette(img, 6, b);
    CHECK(pa.colors == pb.colors);
}

TEST_CASE("palette_distance: identity and uniform shift") {
    SeededRng rng(31);
    Palette p = random_palette(10, rng);
    CHECK(palette_distance(p, p) == 0.0);

    const double delta = 0.03;
    Palette q = p;
    for (auto& c : q.colors) c[1] += delta;
    CHECK(palette_distance(p, q) ==
          doctest::Approx(10 * delta).epsilon(1e-9));
}

TEST_CASE("palette_distance: brute force at k=4") {
    SeededRng rng(55);
    for (int trial = 0; trial < 10; ++trial) {
        Palette p = random_palette(4, rng);
        Palette q = random_palette(4, rng);
        double got = palette_distance(p, q);
        double want = brute_force_distance(p, q);
        CHECK(std::abs(got - want) <= 1e-12);
    }
}

TEST_CASE("palette_distance: metric properties") {
    SeededRng rng(101);
    for (int trial = 0; trial < 25; ++trial) {
        Palette a = random_palette(5, rng);
        Palette b = random_palette(5, rng);
        Palette c = random_palette(5, rng);
        double ab = palette_distance(a, b);
        double ba = palette_distance(b, a);
        double ac = palette_distance(a, c);
        double cb = palette_distance(c, b);
        CHECK(std::abs(ab - ba) <= 1e-9);
        CHECK(ab >= 0.0);
        CHECK(ab <= ac + cb + 1e-9);
    }
    Palette a = random_palette(5, rng);
    Palette shuffled = a;
    std::rotate(shuffled.colors.begin(), shuffled.colors.begin() + 2,
                shuffled.colors.end());
    CHECK(palette_distance(a, shuffled) <= 1e-12);

    Palette wrong_size = random_palette(4, rng);
    CHECK_THROWS_AS(palette_distance(a, wrong_size), InvalidInputError);
}

TEST_CASE("kl_trace: identical chains give a zero trace") {
    ChainRecord chain;
    RunDiagnostics diag;
    SeededRng rng(1);
    const int T = 5;
    chain.latents.resize(T + 1);
    diag.gen_latents.resize(T + 1);
    for (int j = 0; j <= T; ++j) {
        chain.latents[j] = sample_standard_gaussian(1, 4, 4, rng);
        diag.gen_latents[j] = chain.latents[j];
    }
    for (int t = T; t >= 1; --t) {
        StepDiagnostics s;
        s.step = t;
        diag.steps.push_back(s);
    }
    TraceSeries series = kl_trace(diag, chain);
    REQUIRE(series.points.size() == T);
    for (const TracePoint& p : series.points) CHECK(p.value == 0.0);
}

TEST_CASE("kl_trace: reconstruction run stays near zero") {
    const int T = 50;
    NoiseSchedule s = build_schedule(1000, T, 0.00085, 0.012);
    AnalyticGaussianDenoiser d({0.0}, 1.0);
    Condition cond = Condition::null_condition(4);
    SeededRng data_rng(808);
    LatentTensor x0 = sample_standard_gaussian(1, 12, 12, data_rng);
    ChainRecord chain = invert(x0, cond, s, d);

    RivalConfig cfg;
    cfg.inference_steps = T;
    cfg.guidance_scale = 1.0;
    cfg.init_mode = InitMode::Copy;
    SeededRng rng(0);
    GenerateResult res = rival_generate(chain, cond, cfg, s, d, rng);
    TraceSeries copy_trace = kl_trace(res.diagnostics, chain);
    REQUIRE(copy_trace.points.size() == T);
    for (const TracePoint& p : copy_trace.points) CHECK(p.value <= 1e-6);

    // shuffle init matches the reference fit exactly at t = T,
    // standard init does not
    cfg.init_mode = InitMode::Shuffle;
    SeededRng rng_s(1);
    TraceSeries shuffle_trace = kl_trace(
        rival_generate(chain, cond, cfg, s, d, rng_s).diagnostics, chain);
    cfg.init_mode = InitMode::Standard;
    SeededRng rng_n(1);
    TraceSeries standard_trace = kl_trace(
        rival_generate(chain, cond, cfg, s, d, rng_n).diagnostics, chain);
    CHECK(shuffle_trace.points[0].step == T);
    CHECK(shuffle_trace.points[0].value == 0.0);
    CHECK(standard_trace.points[0].value > shuffle_trace.points[0].value);
}

TEST_CASE("kl_trace: degenerate fits are omitted") {
    ChainRecord chain;
    RunDiagnostics diag;
    SeededRng rng(2);
    chain.latents = {sample_standard_gaussian(1, 3, 3, rng),
                     sample_standard_gaussian(1, 3, 3, rng)};
    diag.gen_latents.resize(2);
    diag.gen_latents[1] = LatentTensor(1, 3, 3);  // constant: no fit
    StepDiagnostics s;
    s.step = 1;
    diag.steps.push_back(s);
    TraceSeries series = kl_trace(diag, chain);
    CHECK(series.points.empty());
}

TEST_CASE("score_trace: mode conventions") {
    RunDiagnostics diag;
    StepDiagnostics replace;
    replace.step = 50;
    replace.mode = InjectionMode::Replace;
    replace.score_ref = {{"attn.0", 1.0}, {"attn.1", 1.0}};
    StepDiagnostics fuse;
    fuse.step = 30;
    fuse.mode = InjectionMode::Fuse;
    fuse.score_ref = {{"attn.0", 0.2}, {"attn.1", 0.37}};
    StepDiagnostics off;
    off.step = 10;
    off.mode = InjectionMode::Off;
    diag.steps = {replace, fuse, off};

    TraceSeries series = score_trace(diag);
    REQUIRE(series.points.size() == 3);
    CHECK(series.points[0].value == 0.5);   // replace convention
    CHECK(series.points[1].value == 0.37);  // bottleneck site attn.1
    CHECK(series.points[2].value == 0.0);   // off
}

TEST_CASE("trace CSV format") {
    TraceSeries series;
    series.points = {{50, 0.5}, {49, 0.25}};
    CHECK(trace_to_csv(series) == "step,value\n50,0.5\n49,0.25\n");
}

TEST_CASE("palette text export") {
    Palette p;
    p.colors = {{0.0, 0.5, 1.0}};
    CHECK(palette_to_text(p) == "0.000000 0.500000 1.000000\n");
}
