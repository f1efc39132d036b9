#include "rival/schedule.hpp"

#include <cmath>
#include <string>

#include "rival/errors.hpp"

namespace rival {

double NoiseSchedule::alpha_at(int chain_index) const {
    if (chain_index < 0 || chain_index > inference_steps)
        throw InvalidInputError("chain index " + std::to_string(chain_index) +
                                " outside [0, " +
                                std::to_string(inference_steps) + "]");
    if (chain_index == 0) return 1.0;
    return alpha_bar[grid[chain_index - 1]];
}

int NoiseSchedule::transition_timestep(int j) const {
    if (j < 0 || j >= inference_steps)
        throw InvalidInputError("transition index " + std::to_string(j) +
                                " outside [0, " +
                                std::to_string(inference_steps) + ")");
    return grid[j];
}

NoiseSchedule build_schedule(int train_steps, int inference_steps,
                             double beta_start, double beta_end,
                             GridSpacing spacing) {
    if (train_steps <= 0)
        throw InvalidInputError("build_schedule: train_steps must be positive");
    if (inference_steps <= 0 || inference_steps > train_steps)
        throw InvalidInputError(
            "build_schedule: inference_steps must be in [1, train_steps]");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        throw InvalidInputError(
            "build_schedule: need 0 < beta_start <= beta_end < 1");

    NoiseSchedule s;
    s.train_steps = train_steps;
    s.inference_steps = inference_steps;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    s.spacing = spacing;
    s.k.resize(train_steps);
    s.alpha_bar.resize(train_steps);
    s.ddim_beta.resize(train_steps);

    const double r0 = std::sqrt(beta_start);
    const double r1 = std::sqrt(beta_end);
    double cum = 1.0;
    for (int i = 0; i < train_steps; ++i) {
        double frac = train_steps > 1
                          ? static_cast<double>(i) / (train_steps - 1)
                          : 0.0;
        double root = r0 + (r1 - r0) * frac;
        s.k[i] = root * root;
        cum *= 1.0 - s.k[i];
        s.alpha_bar[i] = cum;
        s.ddim_beta[i] = std::sqrt(1.0 / cum - 1.0);
    }

    s.grid.resize(inference_steps);
    for (int i = 0; i < inference_steps; ++i) {
        long long t = static_cast<long long>(i) * train_steps / inference_steps;
        if (spacing == GridSpacing::Trailing)
            t = static_cast<long long>(i + 1) * train_steps / inference_steps -
                1;
        s.grid[i] = static_cast<int>(t);
    }
    return s;
}

LatentTensor forward_diffuse(const LatentTensor& x0, int train_timestep,
                             const LatentTensor& w, const NoiseSchedule& s) {
    if (train_timestep < 0 || train_timestep >= s.train_steps)
        throw InvalidInputError("forward_diffuse: timestep out of range");
    if (!x0.same_shape(w))
        throw InvalidInputError("forward_diffuse: shape mismatch");
    const double a = s.alpha_bar[train_timestep];
    const double ca = std::sqrt(a);
    const double cw = std::sqrt(1.0 - a);
    LatentTensor out(x0.channels, x0.height, x0.width);
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data[i] = ca * x0.data[i] + cw * w.data[i];
    return out;
}

LatentTensor ddim_transition(const LatentTensor& x, const LatentTensor& eps,
                             double alpha_from, double alpha_to) {
    if (!x.same_shape(eps))
        throw InvalidInputError("ddim_transition: shape mismatch");
    const double beta_from = std::sqrt(1.0 / alpha_from - 1.0);
    const double beta_to = std::sqrt(1.0 / alpha_to - 1.0);
    const double cx = std::sqrt(alpha_to / alpha_from);
    const double ce = std::sqrt(alpha_to) * (beta_to - beta_from);
    LatentTensor out(x.channels, x.height, x.width);
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data[i] = cx * x.data[i] + ce * eps.data[i];
    return out;
}

LatentTensor ddim_step(const LatentTensor& x, const LatentTensor& eps,
                       int t_from, int t_to, const NoiseSchedule& s) {
    if (t_to >= t_from)
        throw InvalidInputError("ddim_step: need t_to < t_from");
    return ddim_transition(x, eps, s.alpha_at(t_from), s.alpha_at(t_to));
}

LatentTensor ddim_invert_step(const LatentTensor& x, const LatentTensor& eps,
                              int t_from, int t_to, const NoiseSchedule& s) {
    if (t_to <= t_from)
        throw InvalidInputError("ddim_invert_step: need t_to > t_from");
    return ddim_transition(x, eps, s.alpha_at(t_from), s.alpha_at(t_to));
}

LatentTensor ddpm_step(const LatentTensor& x, const LatentTensor& eps, int t,
                       SeededRng& rng, const NoiseSchedule& s) {
    if (t < 1 || t > s.inference_steps)
        throw InvalidInputError("ddpm_step: chain level out of range");
    if (!x.same_shape(eps))
        throw InvalidInputError("ddpm_step: shape mismatch");
    const int ts = s.grid[t - 1];
    const double kt = s.k[ts];
    const double abar = s.alpha_bar[ts];
    const double mean_scale = 1.0 / std::sqrt(1.0 - kt);
    const double eps_coef = kt / std::sqrt(1.0 - abar);
    const double sigma = std::sqrt(kt);
    const bool terminal = (t - 1 == 0);
    LatentTensor out(x.channels, x.height, x.width);
    for (std::size_t i = 0; i < out.size(); ++i) {
        double mu = mean_scale * (x.data[i] - eps_coef * eps.data[i]);
        out.data[i] = terminal ? mu : mu + sigma * rng.next_normal();
    }
    return out;
}

}  // namespace rival
