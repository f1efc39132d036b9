#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "rival/denoiser.hpp"
#include "rival/errors.hpp"
#include "rival/schedule.hpp"

using namespace rival;

namespace {

LatentTensor random_latent(int c, int h, int w, std::uint64_t seed) {
    SeededRng rng(seed);
    return sample_standard_gaussian(c, h, w, rng);
}

}  // namespace

TEST_CASE("analytic_eps: zero at the distribution center") {
    AnalyticGaussianDenoiser d({1.5, -0.5}, 2.0);
    const double a = 0.36;
    LatentTensor x(2, 2, 2);
    for (int c = 0; c < 2; ++c)
        for (int p = 0; p < 4; ++p)
            x.data[c * 4 + p] = std::sqrt(a) * d.mu0()[c];
    LatentTensor eps = d.predict_eps(x, 0, a, Condition::null_condition(4));
    for (double v : eps.data) CHECK(std::abs(v) <= 1e-15);
}

TEST_CASE("analytic_eps: unit-variance simplification") {
    AnalyticGaussianDenoiser d({0.0}, 1.0);
    const double a = 0.4;
    LatentTensor x = random_latent(1, 4, 4, 17);
    LatentTensor eps = d.predict_eps(x, 0, a, Condition::null_condition(4));
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(eps.data[i] ==
              doctest::Approx(std::sqrt(1.0 - a) * x.data[i]).epsilon(1e-12));
}

TEST_CASE("analytic_eps: Bayes posterior oracle") {
    AnalyticGaussianDenoiser d({0.0}, 2.0);
    const double a = 0.25;
    LatentTensor x(1, 1, 1);
    x.data = {1.0};
    LatentTensor eps = d.predict_eps(x, 0, a, Condition::null_condition(4));
    // E[x0|x=1] = (0.5 * 4 / (0.25*4 + 0.75)) * 1 = 2/1.75
    const double posterior = 2.0 / 1.75;
    const double expected = (1.0 - 0.5 * posterior) / std::sqrt(0.75);
    CHECK(eps.data[0] == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("analytic_eps: condition is ignored") {
    AnalyticGaussianDenoiser d({0.3}, 1.2);
    LatentTensor x = random_latent(1, 3, 3, 5);
    LatentTensor a = d.predict_eps(x, 100, 0.5, Condition::from_seed(1, 8));
    LatentTensor b = d.predict_eps(x, 100, 0.5, Condition::null_condition(8));
    CHECK(a.data == b.data);
}

TEST_CASE("toy denoiser: deterministic under seed") {
    ToyDenoiserParams params;
    params.channels = 2;
    params.seed = 99;
    ToyAttentionDenoiser d1(params), d2(params);
    LatentTensor x = random_latent(2, 5, 5, 3);
    Condition cond = Condition::from_seed(4, params.cond_dim);
    LatentTensor e1 = d1.predict_eps(x, 500, 0.5, cond);
    LatentTensor e2 = d2.predict_eps(x, 500, 0.5, cond);
    CHECK(e1.data == e2.data);
}

TEST_CASE("toy denoiser: off-mode context equals the context-free call") {
    ToyDenoiserParams params;
    params.seed = 12;
    ToyAttentionDenoiser d(params);
    LatentTensor x = random_latent(3, 4, 4, 9);
    Condition cond = Condition::from_seed(2, params.cond_dim);

    HiddenStateCache cache;
    AttentionContext ctx;
    ctx.mode = InjectionMode::Off;
    ctx.step = 0;
    ctx.inject_from = &cache;
    LatentTensor with_ctx = d.predict_eps(x, 200, 0.8, cond, &ctx);
    LatentTensor without = d.predict_eps(x, 200, 0.8, cond);
    CHECK(with_ctx.data == without.data);
}

TEST_CASE("toy denoiser: hidden states cover all sites with stable shapes") {
    ToyDenoiserParams params;
    params.n_sites = 3;
    ToyAttentionDenoiser d(params);
    LatentTensor x = random_latent(3, 4, 6, 2);
    std::map<std::string, TokenMatrix> hidden;
    d.forward_with_hidden(x, 100, Condition::null_condition(params.cond_dim),
                          nullptr, &hidden);
    REQUIRE(hidden.size() == 3);
    for (const auto& [site, tokens] : hidden) {
        CHECK(tokens.rows == 24);
        CHECK(tokens.cols == params.token_dim);
    }
    CHECK(d.attention_sites() ==
          std::vector<std::string>{"attn.0", "attn.1", "attn.2"});
}

TEST_CASE("toy denoiser: condition changes the output") {
    ToyDenoiserParams params;
    params.seed = 77;
    ToyAttentionDenoiser d(params);
    LatentTensor x = random_latent(3, 4, 4, 21);
    LatentTensor ec =
        d.predict_eps(x, 400, 0.6, Condition::from_seed(11, params.cond_dim));
    LatentTensor eu = d.predict_eps(x, 400, 0.6,
                                    Condition::null_condition(params.cond_dim));
    double diff = 0.0;
    for (std::size_t i = 0; i < ec.size(); ++i)
        diff = std::max(diff, std::abs(ec.data[i] - eu.data[i]));
    CHECK(diff > 1e-6);
}

// Straight-line reimplementation of the documented weight draws and forward
// pass, fully independent of the production code path.
namespace oracle {

struct Weights {
    std::vector<double> w_in, b_in, w_time, b_time, w_cond;
    struct Site {
        std::vector<double> conv_k, conv_b, wq, wk, wv, wo;
    };
    std::vector<Site> sites;
    std::vector<double> w_out, b_out;
};

std::vector<double> draw(SeededRng& rng, std::size_t n, double scale) {
    std::vector<double> v(n);
    for (double& x : v) x = scale * rng.next_normal();
    return v;
}

Weights make_weights(const ToyDenoiserParams& p) {
    SeededRng rng(p.seed);
    Weights w;
    const int c = p.channels, d = p.token_dim;
    const double wd = 1.0 / std::sqrt(static_cast<double>(d));
    w.w_in = draw(rng, static_cast<std::size_t>(c) * d, 1.0 / std::sqrt(c));
    w.b_in = draw(rng, d, 0.1);
    w.w_time = draw(rng, 4 * static_cast<std::size_t>(d), 0.5);
    w.b_time = draw(rng, d, 0.1);
    w.w_cond = draw(rng, static_cast<std::size_t>(p.cond_dim) * d,
                    1.0 / std::sqrt(p.cond_dim));
    w.sites.resize(p.n_sites);
    for (auto& site : w.sites) {
        site.conv_k = draw(rng, 9 * static_cast<std::size_t>(d) * d, wd / 3.0);
        site.conv_b = draw(rng, d, 0.1);
        site.wq = draw(rng, static_cast<std::size_t>(d) * d, wd);
        site.wk = draw(rng, static_cast<std::size_t>(d) * d, wd);
        site.wv = draw(rng, static_cast<std::size_t>(d) * d, wd);
        site.wo = draw(rng, static_cast<std::size_t>(d) * d, wd);
    }
    w.w_out = draw(rng, static_cast<std::size_t>(d) * c, wd);
    w.b_out = draw(rng, c, 0.05);
    return w;
}

std::vector<double> matmul(const std::vector<double>& a, int n,
                           const std::vector<double>& w, int d) {
    std::vector<double> out(static_cast<std::size_t>(n) * d, 0.0);
    for (int r = 0; r < n; ++r)
        for (int i = 0; i < d; ++i)
            for (int o = 0; o < d; ++o)
                out[static_cast<std::size_t>(r) * d + o] +=
                    a[static_cast<std::size_t>(r) * d + i] *
                    w[static_cast<std::size_t>(i) * d + o];
    return out;
}

LatentTensor forward(const ToyDenoiserParams& p, const LatentTensor& x,
                     int timestep, const Condition& cond) {
    const Weights w = make_weights(p);
    const int c = p.channels, d = p.token_dim;
    const int n = x.height * x.width;

    const double tau =
        2.0 * std::numbers::pi * (static_cast<double>(timestep) / p.train_steps);
    const double feats[4] = {std::sin(tau), std::cos(tau), std::sin(2 * tau),
                             std::cos(2 * tau)};
    std::vector<double> bias(w.b_in);
    for (int o = 0; o < d; ++o) {
        for (int f = 0; f < 4; ++f)
            bias[o] += feats[f] * w.w_time[static_cast<std::size_t>(f) * d + o];
        bias[o] += w.b_time[o];
    }
    for (int i = 0; i < p.cond_dim; ++i)
        for (int o = 0; o < d; ++o)
            bias[o] += cond.embedding[i] *
                       w.w_cond[static_cast<std::size_t>(i) * d + o];

    std::vector<double> tok(static_cast<std::size_t>(n) * d, 0.0);
    for (int pix = 0; pix < n; ++pix) {
        for (int ch = 0; ch < c; ++ch)
            for (int o = 0; o < d; ++o)
                tok[static_cast<std::size_t>(pix) * d + o] +=
                    x.data[static_cast<std::size_t>(ch) * n + pix] *
                    w.w_in[static_cast<std::size_t>(ch) * d + o];
        for (int o = 0; o < d; ++o)
            tok[static_cast<std::size_t>(pix) * d + o] =
                std::tanh(tok[static_cast<std::size_t>(pix) * d + o] + bias[o]);
    }

    for (const auto& site : w.sites) {
        // conv mix
        std::vector<double> mixed(static_cast<std::size_t>(n) * d, 0.0);
        for (int y = 0; y < x.height; ++y)
            for (int xx = 0; xx < x.width; ++xx) {
                double* row = mixed.data() +
                              (static_cast<std::size_t>(y) * x.width + xx) * d;
                for (int tap = 0; tap < 9; ++tap) {
                    int ny = y + tap / 3 - 1, nx = xx + tap % 3 - 1;
                    if (ny < 0 || ny >= x.height || nx < 0 || nx >= x.width)
                        continue;
                    const double* src =
                        tok.data() +
                        (static_cast<std::size_t>(ny) * x.width + nx) * d;
                    for (int in = 0; in < d; ++in)
                        for (int o = 0; o < d; ++o)
                            row[o] += src[in] *
                                      site.conv_k[(static_cast<std::size_t>(
                                                       tap) *
                                                       d +
                                                   in) *
                                                      d +
                                                  o];
                }
                for (int o = 0; o < d; ++o)
                    row[o] = std::tanh(row[o] + site.conv_b[o]);
            }
        tok = mixed;

        // vanilla self-attention + residual
        std::vector<double> q = matmul(tok, n, site.wq, d);
        std::vector<double> k = matmul(tok, n, site.wk, d);
        std::vector<double> v = matmul(tok, n, site.wv, d);
        std::vector<double> attn(static_cast<std::size_t>(n) * d, 0.0);
        for (int i = 0; i < n; ++i) {
            std::vector<double> logits(n);
            double mx = -1e300;
            for (int j = 0; j < n; ++j) {
                double dot = 0.0;
                for (int cc = 0; cc < d; ++cc)
                    dot += q[static_cast<std::size_t>(i) * d + cc] *
                           k[static_cast<std::size_t>(j) * d + cc];
                logits[j] = dot / std::sqrt(static_cast<double>(d));
                mx = std::max(mx, logits[j]);
            }
            double denom = 0.0;
            for (int j = 0; j < n; ++j) {
                logits[j] = std::exp(logits[j] - mx);
                denom += logits[j];
            }
            for (int j = 0; j < n; ++j)
                for (int cc = 0; cc < d; ++cc)
                    attn[static_cast<std::size_t>(i) * d + cc] +=
                        logits[j] / denom *
                        v[static_cast<std::size_t>(j) * d + cc];
        }
        std::vector<double> projected = matmul(attn, n, site.wo, d);
        for (std::size_t i = 0; i < tok.size(); ++i) tok[i] += projected[i];
    }

    LatentTensor eps(c, x.height, x.width);
    for (int pix = 0; pix < n; ++pix)
        for (int ch = 0; ch < c; ++ch) {
            double acc = w.b_out[ch];
            for (int in = 0; in < d; ++in)
                acc += tok[static_cast<std::size_t>(pix) * d + in] *
                       w.w_out[static_cast<std::size_t>(in) * c + ch];
            eps.data[static_cast<std::size_t>(ch) * n + pix] = acc;
        }
    return eps;
}

}  // namespace oracle

TEST_CASE("toy denoiser: matches the straight-line forward oracle") {
    ToyDenoiserParams params;
    params.channels = 1;
    params.seed = 4242;
    ToyAttentionDenoiser d(params);
    LatentTensor x = random_latent(1, 8, 8, 55);
    Condition cond = Condition::from_seed(6, params.cond_dim);

    LatentTensor got = d.predict_eps(x, 340, 0.5, cond);
    LatentTensor expected = oracle::forward(params, x, 340, cond);
    REQUIRE(got.size() == expected.size());
    for (std::size_t i = 0; i < got.size(); ++i)
        CHECK(got.data[i] == doctest::Approx(expected.data[i]).epsilon(1e-9));
}

TEST_CASE("analytic_eps drives DDIM onto the data distribution") {
    // Pool final samples of many short chains and compare the fitted
    // moments against the data law (the Monte-Carlo oracle).
    NoiseSchedule s = build_schedule(1000, 500, 0.00085, 0.012);
    AnalyticGaussianDenoiser d({0.0}, 1.0);
    Condition cond = Condition::null_condition(2);
    std::vector<double> pooled;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        SeededRng rng(7000 + seed);
        LatentTensor x = sample_standard_gaussian(1, 8, 8, rng);
        for (int t = 500; t >= 1; --t) {
            const int ts = s.grid[t - 1];
            LatentTensor eps = d.predict_eps(x, ts, s.alpha_bar[ts], cond);
            x = ddim_step(x, eps, t, t - 1, s);
        }
        pooled.insert(pooled.end(), x.data.begin(), x.data.end());
    }
    double sum = 0.0;
    for (double v : pooled) sum += v;
    const double mean = sum / pooled.size();
    double ss = 0.0;
    for (double v : pooled) ss += (v - mean) * (v - mean);
    const double stddev = std::sqrt(ss / pooled.size());
    CHECK(std::abs(mean) <= 0.05);
    CHECK(std::abs(stddev - 1.0) <= 0.05);
}

TEST_CASE("toy denoiser: channel mismatch raises a configuration error") {
    ToyDenoiserParams params;
    ToyAttentionDenoiser d(params);
    LatentTensor x = random_latent(2, 4, 4, 1);
    CHECK_THROWS_AS(
        d.predict_eps(x, 10, 0.9, Condition::null_condition(params.cond_dim)),
        ConfigError);
}
