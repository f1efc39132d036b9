#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "rival/attention.hpp"
#include "rival/denoiser.hpp"
#include "rival/errors.hpp"
#include "rival/latent.hpp"
#include "rival/rng.hpp"
#include "rival/schedule.hpp"

namespace rival {

enum class InitMode { Shuffle, Adaptive, Standard, Copy };
enum class InversionCondition { SourcePrompt, Empty };

const char* to_string(InitMode m);
InitMode init_mode_from_string(const std::string& s);
const char* to_string(InversionCondition c);
InversionCondition inversion_condition_from_string(const std::string& s);

// Generation-side knobs. t_align gates attention fusion, t_early gates
// noise alignment; both compare against the chain level t counting down
// from T. The LI toggle overrides init_mode with Standard when cleared.
struct RivalConfig {
    int inference_steps = 50;    // T
    double guidance_scale = 7.0; // m
    int t_align = 30;
    int t_early = 30;
    InitMode init_mode = InitMode::Shuffle;
    bool attention_injection = true;  // AI
    bool attention_fusion = true;     // AF
    bool latent_init = true;          // LI
    bool noise_align = true;          // NA
    InversionCondition inversion_condition = InversionCondition::SourcePrompt;
    std::uint64_t seed = 0;
};

// Inversion chain: T+1 latents (level 0 = clean input), the captured
// hidden states, and optionally the per-step noise predictions.
struct ChainRecord {
    std::vector<LatentTensor> latents;
    std::vector<LatentTensor> eps;  // size T when recorded, else empty
    HiddenStateCache hidden;
    Condition condition;

    int levels() const { return static_cast<int>(latents.size()); }
};

// Binary H x W mask, nonzero = regenerate.
struct InpaintSpec {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> mask;

    bool covers(const LatentTensor& x) const {
        return height == x.height && width == x.width;
    }
};

struct StepDiagnostics {
    int step = 0;  // chain level before the transition, T down to 1
    InjectionMode mode = InjectionMode::Off;
    std::map<std::string, double> score_ref;  // conditional branch, per site
    double kl = 0.0;   // kl_gaussian_fit(X_G^t, X_R^t)
    bool kl_valid = false;
};

struct RunDiagnostics {
    std::vector<StepDiagnostics> steps;      // in generation order (t = T..1)
    std::vector<LatentTensor> gen_latents;   // indexed by chain level 0..T
};

struct GenerateResult {
    LatentTensor latent;
    RunDiagnostics diagnostics;
};

// NaN appeared in the chain; carries the offending step's inputs so a
// caller can dump them for inspection.
struct DivergenceError : Error {
    DivergenceError(const std::string& msg, int step_, LatentTensor latent,
                    LatentTensor eps)
        : Error(msg), step(step_), last_latent(std::move(latent)),
          last_eps(std::move(eps)) {}
    int step;
    LatentTensor last_latent;
    LatentTensor last_eps;
};

// DDIM-inverts x0 over the full grid with plain conditional predictions
// (no CFG), capturing hidden states at every step. The caller applies the
// inversion-condition policy when choosing cond.
ChainRecord invert(const LatentTensor& x0, const Condition& cond,
                   const NoiseSchedule& schedule, const Denoiser& denoiser,
                   bool record_eps = true);

LatentTensor init_generation_latent(const ChainRecord& chain,
                                    const RivalConfig& cfg, SeededRng& rng);

// m * eps_cond + (1 - m) * eps_uncond; m of 0 or 1 returns the respective
// branch bit-exactly.
LatentTensor cfg_eps(const LatentTensor& eps_cond,
                     const LatentTensor& eps_uncond, double m);

// AdaIN of the guided prediction onto the reference prediction while noise
// alignment is active (t > t_early); otherwise the input passes through.
LatentTensor aligned_eps(const LatentTensor& eps_cfg,
                         const LatentTensor& eps_ref, int t,
                         const RivalConfig& cfg);

GenerateResult rival_generate(const ChainRecord& chain, const Condition& cond,
                              const RivalConfig& cfg,
                              const NoiseSchedule& schedule,
                              const Denoiser& denoiser, SeededRng& rng);

// Variation constrained by a mask: masked positions regenerate, unmasked
// positions are pinned to the inversion chain at every step.
GenerateResult inpaint_generate(const ChainRecord& chain,
                                const InpaintSpec& spec, const Condition& cond,
                                const RivalConfig& cfg,
                                const NoiseSchedule& schedule,
                                const Denoiser& denoiser, SeededRng& rng);

// Structure-preserved editing: copy init, new condition, injection active
// only once t <= interaction_start.
GenerateResult edit_generate(const ChainRecord& chain,
                             const Condition& new_cond, const RivalConfig& cfg,
                             const NoiseSchedule& schedule,
                             const Denoiser& denoiser, int interaction_start,
                             SeededRng& rng);

// On-disk chain layout: manifest.txt (key = value), latent_###.rivl per
// level, eps_###.rivl per step when recorded, hidden_<site>_###.rivm per
// cache entry. extras lets the caller persist denoiser identity and the
// like next to the core fields.
void save_chain(const std::filesystem::path& dir, const ChainRecord& chain,
                const NoiseSchedule& schedule,
                const std::map<std::string, std::string>& extras = {});

struct LoadedChain {
    ChainRecord chain;
    NoiseSchedule schedule;
    std::map<std::string, std::string> extras;
};

LoadedChain load_chain(const std::filesystem::path& dir);

}  // namespace rival
