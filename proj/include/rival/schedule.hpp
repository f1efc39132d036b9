#pragma once

#include <vector>

#include "rival/latent.hpp"
#include "rival/rng.hpp"

namespace rival {

enum class GridSpacing { Leading, Trailing };

// Variance schedule over train timesteps plus the inference-step grid.
//
// Chain indexing: the inversion/generation chain has T+1 levels, index 0
// being the clean latent. Level j >= 1 sits at train timestep grid[j-1];
// level 0 has cumulative alpha exactly 1 (and ddim beta 0), which closes
// the DDIM step map at the clean end.
struct NoiseSchedule {
    int train_steps = 0;
    int inference_steps = 0;            // T
    double beta_start = 0.0;            // construction params, kept for replay
    double beta_end = 0.0;
    GridSpacing spacing = GridSpacing::Leading;
    std::vector<int> grid;              // size T, strictly increasing
    std::vector<double> k;              // per-step variance, size train_steps
    std::vector<double> alpha_bar;      // cumulative product of (1 - k)
    std::vector<double> ddim_beta;      // sqrt(1/alpha_bar - 1)

    // Cumulative alpha at chain level j in [0, T].
    double alpha_at(int chain_index) const;
    // Train timestep driving the transition between levels j and j+1,
    // j in [0, T-1]. Both step directions use it as the denoiser argument.
    int transition_timestep(int j) const;
};

// k_t is linear in sqrt space between sqrt(beta_start) and sqrt(beta_end)
// then squared; the grid is evenly spaced over the train range.
NoiseSchedule build_schedule(int train_steps, int inference_steps,
                             double beta_start, double beta_end,
                             GridSpacing spacing = GridSpacing::Leading);

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) w  at train timestep t.
LatentTensor forward_diffuse(const LatentTensor& x0, int train_timestep,
                             const LatentTensor& w, const NoiseSchedule& s);

// Shared affine map behind the DDIM step in both directions:
//   out = sqrt(a_to/a_from) x + sqrt(a_to) (beta(a_to) - beta(a_from)) eps
LatentTensor ddim_transition(const LatentTensor& x, const LatentTensor& eps,
                             double alpha_from, double alpha_to);

// Deterministic sampling step between chain levels, t_to < t_from.
LatentTensor ddim_step(const LatentTensor& x, const LatentTensor& eps,
                       int t_from, int t_to, const NoiseSchedule& s);

// Inversion step, t_to > t_from; exact algebraic inverse of ddim_step for
// a fixed eps.
LatentTensor ddim_invert_step(const LatentTensor& x, const LatentTensor& eps,
                              int t_from, int t_to, const NoiseSchedule& s);

// Stochastic ancestral step from chain level t (>= 1) to t-1 with
// sigma_t^2 = k_t; no noise is added on the terminal step into level 0.
LatentTensor ddpm_step(const LatentTensor& x, const LatentTensor& eps, int t,
                       SeededRng& rng, const NoiseSchedule& s);

}  // namespace rival
