#include "rival/denoiser.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "rival/errors.hpp"

namespace rival {

Condition Condition::null_condition(int dim) {
    Condition c;
    c.embedding.assign(dim, 0.0);
    c.is_null = true;
    return c;
}

Condition Condition::from_seed(std::uint64_t seed, int dim) {
    SeededRng rng(seed);
    Condition c;
    c.embedding.resize(dim);
    for (double& v : c.embedding) v = rng.next_normal();
    return c;
}

AnalyticGaussianDenoiser::AnalyticGaussianDenoiser(std::vector<double> mu0,
                                                   double s0)
    : mu0_(std::move(mu0)), s0_(s0) {
    if (s0_ <= 0.0)
        throw InvalidInputError("analytic denoiser: s0 must be positive");
    if (mu0_.empty())
        throw InvalidInputError("analytic denoiser: mu0 must be non-empty");
}

LatentTensor AnalyticGaussianDenoiser::predict_eps(
    const LatentTensor& x, int /*train_timestep*/, double alpha_bar,
    const Condition& /*cond*/, AttentionContext* /*attention*/) const {
    if (x.channels != channels())
        throw ConfigError("analytic denoiser: expected " +
                          std::to_string(channels()) + " channels, got " +
                          std::to_string(x.channels));
    const double a = alpha_bar;
    const double sa = std::sqrt(a);
    const double gain = sa * s0_ * s0_ / (a * s0_ * s0_ + 1.0 - a);
    const double inv_w = 1.0 / std::sqrt(1.0 - a);
    LatentTensor out(x.channels, x.height, x.width);
    const std::size_t hw = x.spatial_size();
    for (int c = 0; c < x.channels; ++c) {
        const double center = sa * mu0_[c];
        const double* src = x.data.data() + static_cast<std::size_t>(c) * hw;
        double* dst = out.data.data() + static_cast<std::size_t>(c) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
            double posterior_x0 = mu0_[c] + gain * (src[i] - center);
            dst[i] = (src[i] - sa * posterior_x0) * inv_w;
        }
    }
    return out;
}

namespace {

// Fan-in scaled normal init, one stream for the whole network.
void fill_normal(std::vector<double>& w, std::size_t count, double scale,
                 SeededRng& rng) {
    w.resize(count);
    for (double& v : w) v = scale * rng.next_normal();
}

}  // namespace

ToyAttentionDenoiser::ToyAttentionDenoiser(const ToyDenoiserParams& params)
    : params_(params) {
    if (params_.channels <= 0 || params_.token_dim <= 0 ||
        params_.cond_dim <= 0 || params_.n_sites <= 0)
        throw InvalidInputError("toy denoiser: all dimensions must be positive");
    SeededRng rng(params_.seed);
    const int c = params_.channels;
    const int d = params_.token_dim;
    const std::size_t dd = static_cast<std::size_t>(d) * d;

    fill_normal(w_in_, static_cast<std::size_t>(c) * d, 1.0 / std::sqrt(c), rng);
    fill_normal(b_in_, d, 0.1, rng);
    fill_normal(w_time_, 4 * static_cast<std::size_t>(d), 0.5, rng);
    fill_normal(b_time_, d, 0.1, rng);
    fill_normal(w_cond_, static_cast<std::size_t>(params_.cond_dim) * d,
                1.0 / std::sqrt(params_.cond_dim), rng);

    const double wd = 1.0 / std::sqrt(static_cast<double>(d));
    sites_.resize(params_.n_sites);
    for (Block& block : sites_) {
        fill_normal(block.conv.kernel, 9 * dd, wd / 3.0, rng);
        fill_normal(block.conv.bias, d, 0.1, rng);
        block.attn.dim = d;
        fill_normal(block.attn.wq, dd, wd, rng);
        fill_normal(block.attn.wk, dd, wd, rng);
        fill_normal(block.attn.wv, dd, wd, rng);
        fill_normal(block.attn.wo, dd, wd, rng);
    }
    fill_normal(w_out_, static_cast<std::size_t>(d) * c, wd, rng);
    fill_normal(b_out_, c, 0.05, rng);
}

std::vector<std::string> ToyAttentionDenoiser::attention_sites() const {
    std::vector<std::string> names;
    for (int i = 0; i < params_.n_sites; ++i)
        names.push_back("attn." + std::to_string(i));
    return names;
}

TokenMatrix ToyAttentionDenoiser::embed_tokens(const LatentTensor& x,
                                               int train_timestep,
                                               const Condition& cond) const {
    const int c = params_.channels;
    const int d = params_.token_dim;
    const std::size_t hw = x.spatial_size();

    // Shared per-call bias: sinusoidal timestep features plus the projected
    // condition embedding.
    const double phase =
        static_cast<double>(train_timestep) / params_.train_steps;
    const double tau = 2.0 * std::numbers::pi * phase;
    const double feats[4] = {std::sin(tau), std::cos(tau), std::sin(2.0 * tau),
                             std::cos(2.0 * tau)};
    std::vector<double> bias(b_in_);
    for (int o = 0; o < d; ++o) {
        for (int f = 0; f < 4; ++f)
            bias[o] += feats[f] * w_time_[static_cast<std::size_t>(f) * d + o];
        bias[o] += b_time_[o];
    }
    const int cd = std::min<int>(params_.cond_dim,
                                 static_cast<int>(cond.embedding.size()));
    for (int i = 0; i < cd; ++i) {
        const double e = cond.embedding[i];
        if (e == 0.0) continue;
        for (int o = 0; o < d; ++o)
            bias[o] += e * w_cond_[static_cast<std::size_t>(i) * d + o];
    }

    TokenMatrix tokens(static_cast<int>(hw), d);
    for (std::size_t p = 0; p < hw; ++p) {
        double* row = tokens.data.data() + p * d;
        for (int ch = 0; ch < c; ++ch) {
            const double v = x.data[static_cast<std::size_t>(ch) * hw + p];
            const double* wrow = w_in_.data() + static_cast<std::size_t>(ch) * d;
            for (int o = 0; o < d; ++o) row[o] += v * wrow[o];
        }
        for (int o = 0; o < d; ++o) row[o] = std::tanh(row[o] + bias[o]);
    }
    return tokens;
}

TokenMatrix ToyAttentionDenoiser::conv_mix(const TokenMatrix& tokens,
                                           int height, int width,
                                           const ConvMix& conv) const {
    const int d = params_.token_dim;
    const std::size_t dd = static_cast<std::size_t>(d) * d;
    TokenMatrix out(tokens.rows, d);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            double* row =
                out.data.data() + (static_cast<std::size_t>(y) * width + x) * d;
            for (int tap = 0; tap < 9; ++tap) {
                const int ny = y + tap / 3 - 1;
                const int nx = x + tap % 3 - 1;
                if (ny < 0 || ny >= height || nx < 0 || nx >= width) continue;
                const double* src =
                    tokens.data.data() +
                    (static_cast<std::size_t>(ny) * width + nx) * d;
                const double* w = conv.kernel.data() + tap * dd;
                for (int in = 0; in < d; ++in) {
                    const double v = src[in];
                    if (v == 0.0) continue;
                    const double* wrow = w + static_cast<std::size_t>(in) * d;
                    for (int o = 0; o < d; ++o) row[o] += v * wrow[o];
                }
            }
            for (int o = 0; o < d; ++o)
                row[o] = std::tanh(row[o] + conv.bias[o]);
        }
    }
    return out;
}

LatentTensor ToyAttentionDenoiser::predict_eps(const LatentTensor& x,
                                               int train_timestep,
                                               double /*alpha_bar*/,
                                               const Condition& cond,
                                               AttentionContext* attention)
    const {
    return forward_with_hidden(x, train_timestep, cond, attention, nullptr);
}

LatentTensor ToyAttentionDenoiser::forward_with_hidden(
    const LatentTensor& x, int train_timestep, const Condition& cond,
    AttentionContext* attention,
    std::map<std::string, TokenMatrix>* hidden_out) const {
    if (x.channels != params_.channels)
        throw ConfigError("toy denoiser: expected " +
                          std::to_string(params_.channels) +
                          " channels, got " + std::to_string(x.channels));
    const int d = params_.token_dim;
    const std::size_t hw = x.spatial_size();

    TokenMatrix tokens = embed_tokens(x, train_timestep, cond);
    for (int site = 0; site < params_.n_sites; ++site) {
        tokens = conv_mix(tokens, x.height, x.width, sites_[site].conv);
        const std::string name = "attn." + std::to_string(site);

        if (hidden_out) (*hidden_out)[name] = tokens;
        InjectionMode mode = InjectionMode::Off;
        const TokenMatrix* v_ref = nullptr;
        if (attention) {
            if (attention->capture_to)
                attention->capture_to->capture(name, attention->step, tokens);
            mode = attention->mode;
            if (mode != InjectionMode::Off) {
                if (!attention->inject_from)
                    throw ConfigError(
                        "toy denoiser: injection requested without a cache");
                v_ref = &attention->inject_from->lookup(name, attention->step);
            }
        }
        AttentionResult attn =
            injected_attention(tokens, v_ref, mode, sites_[site].attn);
        if (attention && attention->scores)
            (*attention->scores)[name] = attn.score_ref;
        for (std::size_t i = 0; i < tokens.data.size(); ++i)
            tokens.data[i] += attn.tokens.data[i];
    }

    LatentTensor eps(params_.channels, x.height, x.width);
    for (std::size_t p = 0; p < hw; ++p) {
        const double* row = tokens.data.data() + p * d;
        for (int ch = 0; ch < params_.channels; ++ch) {
            double acc = b_out_[ch];
            for (int in = 0; in < d; ++in)
                acc += row[in] * w_out_[static_cast<std::size_t>(in) *
                                            params_.channels +
                                        ch];
            eps.data[static_cast<std::size_t>(ch) * hw + p] = acc;
        }
    }
    return eps;
}

}  // namespace rival
