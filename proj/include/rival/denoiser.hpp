#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "rival/attention.hpp"
#include "rival/latent.hpp"

namespace rival {

// Conditioning embedding. The null condition (CFG's unconditional branch)
// is the zero vector with is_null set.
struct Condition {
    std::vector<double> embedding;
    bool is_null = false;

    static Condition null_condition(int dim);
    // Standard-normal embedding drawn from a dedicated stream; stands in
    // for a text encoder.
    static Condition from_seed(std::uint64_t seed, int dim);
};

// Noise predictor interface. alpha_bar is the cumulative alpha at
// train_timestep; callers pass both so implementations pick what they need.
class Denoiser {
public:
    virtual ~Denoiser() = default;

    virtual int channels() const = 0;
    // Attention sites that report hidden states, shallow to deep.
    virtual std::vector<std::string> attention_sites() const { return {}; }

    virtual LatentTensor predict_eps(const LatentTensor& x, int train_timestep,
                                     double alpha_bar, const Condition& cond,
                                     AttentionContext* attention =
                                         nullptr) const = 0;
};

// Closed-form optimal predictor for x0 ~ N(mu0, s0^2 I):
//   eps*(x) = (x - sqrt(a) E[x0|x]) / sqrt(1-a)
//   E[x0|x] = mu0 + (sqrt(a) s0^2 / (a s0^2 + 1 - a)) (x - sqrt(a) mu0)
// Ignores the condition; exercises the schedule and pipeline exactly.
class AnalyticGaussianDenoiser : public Denoiser {
public:
    AnalyticGaussianDenoiser(std::vector<double> mu0, double s0);

    int channels() const override { return static_cast<int>(mu0_.size()); }
    LatentTensor predict_eps(const LatentTensor& x, int train_timestep,
                             double alpha_bar, const Condition& cond,
                             AttentionContext* attention = nullptr) const override;

    const std::vector<double>& mu0() const { return mu0_; }
    double s0() const { return s0_; }

private:
    std::vector<double> mu0_;
    double s0_;
};

struct ToyDenoiserParams {
    int channels = 3;
    int token_dim = 16;   // d_model == d_k
    int cond_dim = 16;
    int n_sites = 2;      // attention sites "attn.0", "attn.1", ...
    int train_steps = 1000;
    std::uint64_t seed = 7;
};

// Small attention-bearing network with seeded frozen weights (no training):
// token embed -> [conv-mix -> self-attention] per site -> linear readout.
// Each attention site reports its pre-QKV input tokens as the hidden state
// and honors the AttentionContext for capture and KV injection.
//
// Weights come from one SeededRng(seed) stream of next_normal() draws in
// this order (count x scale):
//   w_in C*d x 1/sqrt(C); b_in d x 0.1; w_time 4d x 0.5; b_time d x 0.1;
//   w_cond cond_dim*d x 1/sqrt(cond_dim);
//   per site: conv 9*d*d x 1/(3 sqrt(d)); conv bias d x 0.1;
//             wq, wk, wv, wo each d*d x 1/sqrt(d);
//   w_out d*C x 1/sqrt(d); b_out C x 0.05.
class ToyAttentionDenoiser : public Denoiser {
public:
    explicit ToyAttentionDenoiser(const ToyDenoiserParams& params);

    int channels() const override { return params_.channels; }
    std::vector<std::string> attention_sites() const override;

    LatentTensor predict_eps(const LatentTensor& x, int train_timestep,
                             double alpha_bar, const Condition& cond,
                             AttentionContext* attention = nullptr) const override;

    // Same forward pass, also returning every site's hidden state.
    LatentTensor forward_with_hidden(
        const LatentTensor& x, int train_timestep, const Condition& cond,
        AttentionContext* attention,
        std::map<std::string, TokenMatrix>* hidden_out) const;

    const SiteWeights& site_weights(int site) const { return sites_[site].attn; }
    const ToyDenoiserParams& params() const { return params_; }

private:
    struct ConvMix {
        std::vector<double> kernel;  // 9 * dim * dim, taps in scan order
        std::vector<double> bias;    // dim
    };
    struct Block {
        ConvMix conv;
        SiteWeights attn;
    };

    TokenMatrix embed_tokens(const LatentTensor& x, int train_timestep,
                             const Condition& cond) const;
    TokenMatrix conv_mix(const TokenMatrix& tokens, int height, int width,
                         const ConvMix& conv) const;

    ToyDenoiserParams params_;
    std::vector<double> w_in_, b_in_;      // C x d, d
    std::vector<double> w_time_, b_time_;  // 4 x d, d
    std::vector<double> w_cond_;           // cond_dim x d
    std::vector<Block> sites_;
    std::vector<double> w_out_, b_out_;    // d x C, C
};

}  // namespace rival
