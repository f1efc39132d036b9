#include "rival/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "rival/fsutil.hpp"

namespace rival {

const char* to_string(InitMode m) {
    switch (m) {
        case InitMode::Shuffle: return "shuffle";
        case InitMode::Adaptive: return "adaptive";
        case InitMode::Standard: return "standard";
        case InitMode::Copy: return "copy";
    }
    return "?";
}

InitMode init_mode_from_string(const std::string& s) {
    if (s == "shuffle") return InitMode::Shuffle;
    if (s == "adaptive") return InitMode::Adaptive;
    if (s == "standard") return InitMode::Standard;
    if (s == "copy") return InitMode::Copy;
    throw InvalidInputError("unknown init mode '" + s + "'");
}

const char* to_string(InversionCondition c) {
    return c == InversionCondition::SourcePrompt ? "source-prompt" : "empty";
}

InversionCondition inversion_condition_from_string(const std::string& s) {
    if (s == "source-prompt") return InversionCondition::SourcePrompt;
    if (s == "empty") return InversionCondition::Empty;
    throw InvalidInputError("unknown inversion condition policy '" + s + "'");
}

ChainRecord invert(const LatentTensor& x0, const Condition& cond,
                   const NoiseSchedule& schedule, const Denoiser& denoiser,
                   bool record_eps) {
    if (x0.size() == 0 || !x0.all_finite())
        throw InvalidInputError("invert: input latent empty or non-finite");
    if (x0.channels != denoiser.channels())
        throw ConfigError("invert: latent has " + std::to_string(x0.channels) +
                          " channels, denoiser expects " +
                          std::to_string(denoiser.channels()));
    const int T = schedule.inference_steps;
    ChainRecord chain;
    chain.condition = cond;
    chain.latents.reserve(T + 1);
    chain.latents.push_back(x0);
    LatentTensor x = x0;
    for (int j = 0; j < T; ++j) {
        const int ts = schedule.transition_timestep(j);
        AttentionContext ctx;
        ctx.step = j;
        ctx.capture_to = &chain.hidden;
        LatentTensor eps =
            denoiser.predict_eps(x, ts, schedule.alpha_bar[ts], cond, &ctx);
        x = ddim_invert_step(x, eps, j, j + 1, schedule);
        if (!x.all_finite())
            throw DivergenceError(
                "invert: non-finite latent after step " + std::to_string(j),
                j, chain.latents.back(), eps);
        if (record_eps) chain.eps.push_back(std::move(eps));
        chain.latents.push_back(x);
    }
    return chain;
}

LatentTensor init_generation_latent(const ChainRecord& chain,
                                    const RivalConfig& cfg, SeededRng& rng) {
    if (chain.latents.empty())
        throw InvalidInputError("init_generation_latent: empty chain");
    const LatentTensor& top = chain.latents.back();
    const InitMode mode =
        cfg.latent_init ? cfg.init_mode : InitMode::Standard;
    switch (mode) {
        case InitMode::Shuffle:
            return shuffle_spatial(top, rng);
        case InitMode::Adaptive:
            return sample_adaptive_gaussian(stats(top), top.channels,
                                            top.height, top.width, rng);
        case InitMode::Standard:
            return sample_standard_gaussian(top.channels, top.height,
                                            top.width, rng);
        case InitMode::Copy:
            return top;
    }
    throw InvalidInputError("init_generation_latent: bad mode");
}

LatentTensor cfg_eps(const LatentTensor& eps_cond,
                     const LatentTensor& eps_uncond, double m) {
    if (!eps_cond.same_shape(eps_uncond))
        throw InvalidInputError("cfg_eps: shape mismatch");
    if (m == 1.0) return eps_cond;
    if (m == 0.0) return eps_uncond;
    LatentTensor out(eps_cond.channels, eps_cond.height, eps_cond.width);
    const double mu = 1.0 - m;
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data[i] = m * eps_cond.data[i] + mu * eps_uncond.data[i];
    return out;
}

LatentTensor aligned_eps(const LatentTensor& eps_cfg,
                         const LatentTensor& eps_ref, int t,
                         const RivalConfig& cfg) {
    if (!cfg.noise_align || t <= cfg.t_early) return eps_cfg;
    return adain(eps_cfg, eps_ref);
}

namespace {

struct GenerateOptions {
    const InpaintSpec* mask = nullptr;
    int interaction_start = -1;  // < 0: injection window always open
    const LatentTensor* init_override = nullptr;
};

LatentTensor masked_init(const LatentTensor& top, const InpaintSpec& spec,
                         SeededRng& rng) {
    // Permute channel vectors among masked positions only; unmasked
    // positions keep the inverted latent.
    std::vector<std::size_t> idx;
    const std::size_t hw = top.spatial_size();
    for (std::size_t p = 0; p < hw; ++p)
        if (spec.mask[p]) idx.push_back(p);
    std::vector<std::size_t> perm(idx);
    for (std::size_t i = perm.size(); i-- > 1;) {
        std::size_t j = rng.bounded(i + 1);
        std::swap(perm[i], perm[j]);
    }
    LatentTensor out = top;
    for (std::size_t r = 0; r < idx.size(); ++r)
        for (int c = 0; c < top.channels; ++c)
            out.data[static_cast<std::size_t>(c) * hw + idx[r]] =
                top.data[static_cast<std::size_t>(c) * hw + perm[r]];
    return out;
}

// Pin unmasked positions to the reference level; masked positions keep x.
void apply_mask(LatentTensor& x, const LatentTensor& ref,
                const InpaintSpec& spec) {
    const std::size_t hw = x.spatial_size();
    for (int c = 0; c < x.channels; ++c) {
        double* xd = x.data.data() + static_cast<std::size_t>(c) * hw;
        const double* rd = ref.data.data() + static_cast<std::size_t>(c) * hw;
        for (std::size_t p = 0; p < hw; ++p)
            if (!spec.mask[p]) xd[p] = rd[p];
    }
}

GenerateResult generate_impl(const ChainRecord& chain, const Condition& cond,
                             const RivalConfig& cfg,
                             const NoiseSchedule& schedule,
                             const Denoiser& denoiser, SeededRng& rng,
                             const GenerateOptions& opts) {
    const int T = schedule.inference_steps;
    if (chain.levels() != T + 1)
        throw ConfigError("generate: chain has " +
                          std::to_string(chain.levels()) + " levels, schedule expects " +
                          std::to_string(T + 1));
    if (chain.latents[0].channels != denoiser.channels())
        throw ConfigError("generate: chain/denoiser channel mismatch");
    if (!chain.eps.empty() && static_cast<int>(chain.eps.size()) != T)
        throw ConfigError("generate: chain eps records are incomplete");
    if (opts.mask && !opts.mask->covers(chain.latents[0]))
        throw InvalidInputError("generate: mask shape mismatch");

    LatentTensor x = opts.init_override
                         ? *opts.init_override
                         : init_generation_latent(chain, cfg, rng);
    const Condition null_cond =
        Condition::null_condition(static_cast<int>(cond.embedding.size()));

    GenerateResult result;
    result.diagnostics.gen_latents.resize(T + 1);
    result.diagnostics.steps.reserve(T);

    for (int t = T; t >= 1; --t) {
        result.diagnostics.gen_latents[t] = x;

        StepDiagnostics diag;
        diag.step = t;
        try {
            diag.kl = kl_gaussian_fit(x, chain.latents[t]);
            diag.kl_valid = true;
        } catch (const DegenerateDistributionError&) {
            diag.kl = 0.0;
            diag.kl_valid = false;
        }

        const int key = t - 1;  // transition index and cache key
        const int ts = schedule.transition_timestep(key);
        const double abar = schedule.alpha_bar[ts];

        const bool window_open =
            opts.interaction_start < 0 || t <= opts.interaction_start;
        InjectionPolicy policy{cfg.t_align,
                               cfg.attention_injection && window_open,
                               cfg.attention_fusion};
        diag.mode = policy_mode(t, policy);

        AttentionContext ctx;
        ctx.mode = diag.mode;
        ctx.step = key;
        ctx.inject_from = &chain.hidden;
        ctx.scores = &diag.score_ref;
        LatentTensor eps_cond = denoiser.predict_eps(x, ts, abar, cond, &ctx);

        AttentionContext ctx_uncond = ctx;
        ctx_uncond.scores = nullptr;
        LatentTensor eps_uncond =
            denoiser.predict_eps(x, ts, abar, null_cond, &ctx_uncond);

        LatentTensor eps = cfg_eps(eps_cond, eps_uncond, cfg.guidance_scale);
        if (cfg.noise_align && t > cfg.t_early) {
            // Reference prediction: the inversion chain's own at this step,
            // read from the records or recomputed from the stored latent.
            if (!chain.eps.empty()) {
                eps = aligned_eps(eps, chain.eps[key], t, cfg);
            } else {
                LatentTensor eps_ref = denoiser.predict_eps(
                    chain.latents[key], ts, abar, chain.condition, nullptr);
                eps = aligned_eps(eps, eps_ref, t, cfg);
            }
        }

        x = ddim_step(x, eps, t, t - 1, schedule);
        if (opts.mask) apply_mask(x, chain.latents[t - 1], *opts.mask);
        if (!x.all_finite())
            throw DivergenceError("generate: non-finite latent after step " +
                                      std::to_string(t),
                                  t, result.diagnostics.gen_latents[t], eps);
        result.diagnostics.steps.push_back(std::move(diag));
    }

    result.diagnostics.gen_latents[0] = x;
    result.latent = std::move(x);
    return result;
}

}  // namespace

GenerateResult rival_generate(const ChainRecord& chain, const Condition& cond,
                              const RivalConfig& cfg,
                              const NoiseSchedule& schedule,
                              const Denoiser& denoiser, SeededRng& rng) {
    return generate_impl(chain, cond, cfg, schedule, denoiser, rng, {});
}

GenerateResult inpaint_generate(const ChainRecord& chain,
                                const InpaintSpec& spec, const Condition& cond,
                                const RivalConfig& cfg,
                                const NoiseSchedule& schedule,
                                const Denoiser& denoiser, SeededRng& rng) {
    if (!spec.covers(chain.latents.at(0)))
        throw InvalidInputError("inpaint: mask shape mismatch");
    LatentTensor init = masked_init(chain.latents.back(), spec, rng);
    GenerateOptions opts;
    opts.mask = &spec;
    opts.init_override = &init;
    return generate_impl(chain, cond, cfg, schedule, denoiser, rng, opts);
}

GenerateResult edit_generate(const ChainRecord& chain,
                             const Condition& new_cond, const RivalConfig& cfg,
                             const NoiseSchedule& schedule,
                             const Denoiser& denoiser, int interaction_start,
                             SeededRng& rng) {
    if (interaction_start < 0 || interaction_start > schedule.inference_steps)
        throw InvalidInputError("edit: interaction_start outside [0, T]");
    RivalConfig edit_cfg = cfg;
    edit_cfg.init_mode = InitMode::Copy;
    edit_cfg.latent_init = true;
    GenerateOptions opts;
    opts.interaction_start = interaction_start;
    return generate_impl(chain, new_cond, edit_cfg, schedule, denoiser, rng,
                         opts);
}

namespace {

std::string latent_name(int level) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "latent_%03d.rivl", level);
    return buf;
}

std::string eps_name(int step) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "eps_%03d.rivl", step);
    return buf;
}

std::string join_doubles(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += format_double(v[i]);
    }
    return out;
}

std::vector<double> split_doubles(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(std::stod(item));
    }
    return out;
}

}  // namespace

void save_chain(const std::filesystem::path& dir, const ChainRecord& chain,
                const NoiseSchedule& schedule,
                const std::map<std::string, std::string>& extras) {
    std::filesystem::create_directories(dir);
    const LatentTensor& x0 = chain.latents.at(0);

    std::string manifest;
    manifest += "chain_format = 1\n";
    manifest += "train_steps = " + std::to_string(schedule.train_steps) + "\n";
    manifest += "inference_steps = " +
                std::to_string(schedule.inference_steps) + "\n";
    manifest += "beta_start = " + format_double(schedule.beta_start) + "\n";
    manifest += "beta_end = " + format_double(schedule.beta_end) + "\n";
    manifest += std::string("grid_spacing = ") +
                (schedule.spacing == GridSpacing::Leading ? "leading"
                                                          : "trailing") +
                "\n";
    manifest += "channels = " + std::to_string(x0.channels) + "\n";
    manifest += "height = " + std::to_string(x0.height) + "\n";
    manifest += "width = " + std::to_string(x0.width) + "\n";
    manifest += "condition_is_null = " +
                std::to_string(chain.condition.is_null ? 1 : 0) + "\n";
    manifest +=
        "condition_embedding = " + join_doubles(chain.condition.embedding) +
        "\n";
    manifest += "has_eps = " + std::to_string(chain.eps.empty() ? 0 : 1) + "\n";
    for (const auto& [k, v] : extras) manifest += k + " = " + v + "\n";
    write_file_atomic(dir / "manifest.txt", manifest);

    for (int j = 0; j < chain.levels(); ++j)
        save_latent(dir / latent_name(j), chain.latents[j]);
    for (std::size_t j = 0; j < chain.eps.size(); ++j)
        save_latent(dir / eps_name(static_cast<int>(j)), chain.eps[j]);
    chain.hidden.save(dir);
}

LoadedChain load_chain(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.txt";
    if (!std::filesystem::exists(manifest_path))
        throw FormatError(dir.string() + ": missing manifest.txt");

    std::map<std::string, std::string> kv;
    for (const KvEntry& e : parse_key_value_lines(read_file(manifest_path)))
        kv[e.key] = e.value;

    auto need = [&](const std::string& key) -> std::string {
        auto it = kv.find(key);
        if (it == kv.end())
            throw FormatError("manifest: missing key '" + key + "'");
        return it->second;
    };

    LoadedChain loaded;
    const int train_steps = std::stoi(need("train_steps"));
    const int T = std::stoi(need("inference_steps"));
    const double beta_start = std::stod(need("beta_start"));
    const double beta_end = std::stod(need("beta_end"));
    const GridSpacing spacing = need("grid_spacing") == "trailing"
                                    ? GridSpacing::Trailing
                                    : GridSpacing::Leading;
    loaded.schedule =
        build_schedule(train_steps, T, beta_start, beta_end, spacing);

    loaded.chain.condition.is_null = need("condition_is_null") == "1";
    loaded.chain.condition.embedding = split_doubles(need("condition_embedding"));
    const bool has_eps = need("has_eps") == "1";

    static const char* kCoreKeys[] = {
        "chain_format", "train_steps", "inference_steps", "beta_start",
        "beta_end", "grid_spacing", "channels", "height", "width",
        "condition_is_null", "condition_embedding", "has_eps"};
    for (const auto& [k, v] : kv) {
        bool core = false;
        for (const char* ck : kCoreKeys) core = core || k == ck;
        if (!core) loaded.extras[k] = v;
    }

    loaded.chain.latents.reserve(T + 1);
    for (int j = 0; j <= T; ++j)
        loaded.chain.latents.push_back(load_latent(dir / latent_name(j)));
    if (has_eps)
        for (int j = 0; j < T; ++j)
            loaded.chain.eps.push_back(load_latent(dir / eps_name(j)));
    loaded.chain.hidden = HiddenStateCache::load(dir);
    return loaded;
}

}  // namespace rival
