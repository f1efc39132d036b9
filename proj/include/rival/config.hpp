#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include "rival/denoiser.hpp"
#include "rival/pipeline.hpp"
#include "rival/schedule.hpp"

namespace rival {

// Fully resolved run parameters. Every field has a default; the parser
// rejects unknown keys and out-of-range values with the source line.
struct RunConfig {
    // schedule
    int train_steps = 1000;
    int inference_steps = 50;  // T
    double beta_start = 0.00085;
    double beta_end = 0.012;
    // generation knobs
    double m = 7.0;
    int t_align = 30;
    int t_early = 30;
    InitMode init_mode = InitMode::Shuffle;
    bool attention_injection = true;
    bool attention_fusion = true;
    bool latent_init = true;
    bool noise_align = true;
    InversionCondition inversion_condition = InversionCondition::SourcePrompt;
    std::uint64_t seed = 0;
    // denoiser
    std::string denoiser_kind = "toy";  // "analytic" | "toy"
    std::uint64_t denoiser_seed = 7;
    double denoiser_mu0 = 0.0;
    double denoiser_s0 = 1.0;
    int denoiser_channels = 3;
    int denoiser_size = 32;
    // conditioning
    int d_cond = 16;
    std::uint64_t condition_seed = 1;
    std::uint64_t edit_condition_seed = 2;
    // metrics
    int palette_k = 10;
};

RunConfig parse_config(const std::filesystem::path& path);
RunConfig parse_config_text(const std::string& text);

// Full "key = value" echo in canonical order; parse_config_text round-trips
// it exactly.
std::string serialize_config(const RunConfig& cfg);

RivalConfig to_rival_config(const RunConfig& cfg);
NoiseSchedule schedule_from_config(const RunConfig& cfg);
std::unique_ptr<Denoiser> denoiser_from_config(const RunConfig& cfg);

// Condition for inversion and variation; edit_condition for the edit task.
Condition condition_from_config(const RunConfig& cfg);
Condition edit_condition_from_config(const RunConfig& cfg);

// Denoiser/conditioning identity persisted in a chain manifest, and its
// inverse when re-running generation against a stored chain.
std::map<std::string, std::string> config_extras(const RunConfig& cfg);
void apply_extras(RunConfig& cfg, const std::map<std::string, std::string>&
                                      extras);

}  // namespace rival
