#include "rival/config.hpp"

#include <charconv>
#include <cstdlib>

#include "rival/errors.hpp"
#include "rival/fsutil.hpp"

namespace rival {

namespace {

[[noreturn]] void fail(int line, const std::string& msg) {
    throw FormatError("line " + std::to_string(line) + ": " + msg);
}

int parse_int(const KvEntry& e) {
    try {
        std::size_t used = 0;
        int v = std::stoi(e.value, &used);
        if (used != e.value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        fail(e.line, e.key + ": '" + e.value + "' is not an integer");
    }
}

std::uint64_t parse_u64(const KvEntry& e) {
    try {
        std::size_t used = 0;
        unsigned long long v = std::stoull(e.value, &used);
        if (used != e.value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        fail(e.line, e.key + ": '" + e.value + "' is not an unsigned integer");
    }
}

double parse_real(const KvEntry& e) {
    try {
        std::size_t used = 0;
        double v = std::stod(e.value, &used);
        if (used != e.value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        fail(e.line, e.key + ": '" + e.value + "' is not a number");
    }
}

bool parse_bool(const KvEntry& e) {
    if (e.value == "true" || e.value == "1") return true;
    if (e.value == "false" || e.value == "0") return false;
    fail(e.line, e.key + ": '" + e.value + "' is not a boolean (true/false)");
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::map<std::string, int> seen_lines;

    for (const KvEntry& e : parse_key_value_lines(text)) {
        seen_lines[e.key] = e.line;
        if (e.key == "train_steps") cfg.train_steps = parse_int(e);
        else if (e.key == "inference_steps") cfg.inference_steps = parse_int(e);
        else if (e.key == "beta_start") cfg.beta_start = parse_real(e);
        else if (e.key == "beta_end") cfg.beta_end = parse_real(e);
        else if (e.key == "m") cfg.m = parse_real(e);
        else if (e.key == "t_align") cfg.t_align = parse_int(e);
        else if (e.key == "t_early") cfg.t_early = parse_int(e);
        else if (e.key == "init_mode") {
            try {
                cfg.init_mode = init_mode_from_string(e.value);
            } catch (const InvalidInputError& err) {
                fail(e.line, err.what());
            }
        } else if (e.key == "attention_injection")
            cfg.attention_injection = parse_bool(e);
        else if (e.key == "attention_fusion")
            cfg.attention_fusion = parse_bool(e);
        else if (e.key == "latent_init") cfg.latent_init = parse_bool(e);
        else if (e.key == "noise_align") cfg.noise_align = parse_bool(e);
        else if (e.key == "inversion_condition") {
            try {
                cfg.inversion_condition =
                    inversion_condition_from_string(e.value);
            } catch (const InvalidInputError& err) {
                fail(e.line, err.what());
            }
        } else if (e.key == "seed") cfg.seed = parse_u64(e);
        else if (e.key == "denoiser.kind") {
            if (e.value != "analytic" && e.value != "toy")
                fail(e.line, "denoiser.kind must be 'analytic' or 'toy'");
            cfg.denoiser_kind = e.value;
        } else if (e.key == "denoiser.seed") cfg.denoiser_seed = parse_u64(e);
        else if (e.key == "denoiser.mu0") cfg.denoiser_mu0 = parse_real(e);
        else if (e.key == "denoiser.s0") cfg.denoiser_s0 = parse_real(e);
        else if (e.key == "denoiser.channels")
            cfg.denoiser_channels = parse_int(e);
        else if (e.key == "denoiser.size") cfg.denoiser_size = parse_int(e);
        else if (e.key == "d_cond") cfg.d_cond = parse_int(e);
        else if (e.key == "condition_seed") cfg.condition_seed = parse_u64(e);
        else if (e.key == "edit_condition_seed")
            cfg.edit_condition_seed = parse_u64(e);
        else if (e.key == "palette_k") cfg.palette_k = parse_int(e);
        else
            fail(e.line, "unknown key '" + e.key + "'");
    }

    auto where = [&](const char* key) {
        auto it = seen_lines.find(key);
        return it == seen_lines.end() ? 0 : it->second;
    };
    auto range_fail = [&](const char* key, const std::string& msg) {
        int line = where(key);
        std::string loc = line ? "line " + std::to_string(line) + ": " : "";
        throw FormatError(loc + msg);
    };

    if (cfg.train_steps < 1)
        range_fail("train_steps", "train_steps must be >= 1");
    if (cfg.inference_steps < 1 || cfg.inference_steps > cfg.train_steps)
        range_fail("inference_steps",
                   "inference_steps must be in [1, train_steps=" +
                       std::to_string(cfg.train_steps) + "]");
    if (!(cfg.beta_start > 0.0) || !(cfg.beta_start <= cfg.beta_end) ||
        !(cfg.beta_end < 1.0))
        range_fail("beta_start", "need 0 < beta_start <= beta_end < 1");
    if (cfg.m < 0.0) range_fail("m", "m must be >= 0");
    if (cfg.t_align < 0 || cfg.t_align > cfg.inference_steps)
        range_fail("t_align", "t_align must be in [0, inference_steps=" +
                                  std::to_string(cfg.inference_steps) + "]");
    if (cfg.t_early < 0 || cfg.t_early > cfg.inference_steps)
        range_fail("t_early", "t_early must be in [0, inference_steps=" +
                                  std::to_string(cfg.inference_steps) + "]");
    if (cfg.denoiser_s0 <= 0.0)
        range_fail("denoiser.s0", "denoiser.s0 must be > 0");
    if (cfg.denoiser_channels < 1)
        range_fail("denoiser.channels", "denoiser.channels must be >= 1");
    if (cfg.denoiser_size < 1)
        range_fail("denoiser.size", "denoiser.size must be >= 1");
    if (cfg.d_cond < 1) range_fail("d_cond", "d_cond must be >= 1");
    if (cfg.palette_k < 1) range_fail("palette_k", "palette_k must be >= 1");
    return cfg;
}

RunConfig parse_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        throw FormatError("config file not found: " + path.string());
    return parse_config_text(read_file(path));
}

std::string serialize_config(const RunConfig& cfg) {
    std::string out;
    auto kv = [&](const std::string& k, const std::string& v) {
        out += k + " = " + v + "\n";
    };
    kv("train_steps", std::to_string(cfg.train_steps));
    kv("inference_steps", std::to_string(cfg.inference_steps));
    kv("beta_start", format_double(cfg.beta_start));
    kv("beta_end", format_double(cfg.beta_end));
    kv("m", format_double(cfg.m));
    kv("t_align", std::to_string(cfg.t_align));
    kv("t_early", std::to_string(cfg.t_early));
    kv("init_mode", to_string(cfg.init_mode));
    kv("attention_injection", cfg.attention_injection ? "true" : "false");
    kv("attention_fusion", cfg.attention_fusion ? "true" : "false");
    kv("latent_init", cfg.latent_init ? "true" : "false");
    kv("noise_align", cfg.noise_align ? "true" : "false");
    kv("inversion_condition", to_string(cfg.inversion_condition));
    kv("seed", std::to_string(cfg.seed));
    kv("denoiser.kind", cfg.denoiser_kind);
    kv("denoiser.seed", std::to_string(cfg.denoiser_seed));
    kv("denoiser.mu0", format_double(cfg.denoiser_mu0));
    kv("denoiser.s0", format_double(cfg.denoiser_s0));
    kv("denoiser.channels", std::to_string(cfg.denoiser_channels));
    kv("denoiser.size", std::to_string(cfg.denoiser_size));
    kv("d_cond", std::to_string(cfg.d_cond));
    kv("condition_seed", std::to_string(cfg.condition_seed));
    kv("edit_condition_seed", std::to_string(cfg.edit_condition_seed));
    kv("palette_k", std::to_string(cfg.palette_k));
    return out;
}

RivalConfig to_rival_config(const RunConfig& cfg) {
    RivalConfig rc;
    rc.inference_steps = cfg.inference_steps;
    rc.guidance_scale = cfg.m;
    rc.t_align = cfg.t_align;
    rc.t_early = cfg.t_early;
    rc.init_mode = cfg.init_mode;
    rc.attention_injection = cfg.attention_injection;
    rc.attention_fusion = cfg.attention_fusion;
    rc.latent_init = cfg.latent_init;
    rc.noise_align = cfg.noise_align;
    rc.inversion_condition = cfg.inversion_condition;
    rc.seed = cfg.seed;
    return rc;
}

NoiseSchedule schedule_from_config(const RunConfig& cfg) {
    return build_schedule(cfg.train_steps, cfg.inference_steps, cfg.beta_start,
                          cfg.beta_end);
}

std::unique_ptr<Denoiser> denoiser_from_config(const RunConfig& cfg) {
    if (cfg.denoiser_kind == "analytic") {
        std::vector<double> mu0(cfg.denoiser_channels, cfg.denoiser_mu0);
        return std::make_unique<AnalyticGaussianDenoiser>(std::move(mu0),
                                                          cfg.denoiser_s0);
    }
    ToyDenoiserParams params;
    params.channels = cfg.denoiser_channels;
    params.cond_dim = cfg.d_cond;
    params.train_steps = cfg.train_steps;
    params.seed = cfg.denoiser_seed;
    return std::make_unique<ToyAttentionDenoiser>(params);
}

Condition condition_from_config(const RunConfig& cfg) {
    return Condition::from_seed(cfg.condition_seed, cfg.d_cond);
}

Condition edit_condition_from_config(const RunConfig& cfg) {
    return Condition::from_seed(cfg.edit_condition_seed, cfg.d_cond);
}

std::map<std::string, std::string> config_extras(const RunConfig& cfg) {
    std::map<std::string, std::string> extras;
    extras["denoiser.kind"] = cfg.denoiser_kind;
    extras["denoiser.seed"] = std::to_string(cfg.denoiser_seed);
    extras["denoiser.mu0"] = format_double(cfg.denoiser_mu0);
    extras["denoiser.s0"] = format_double(cfg.denoiser_s0);
    extras["denoiser.channels"] = std::to_string(cfg.denoiser_channels);
    extras["d_cond"] = std::to_string(cfg.d_cond);
    extras["condition_seed"] = std::to_string(cfg.condition_seed);
    return extras;
}

void apply_extras(RunConfig& cfg,
                  const std::map<std::string, std::string>& extras) {
    auto get = [&](const char* key) -> const std::string* {
        auto it = extras.find(key);
        return it == extras.end() ? nullptr : &it->second;
    };
    if (auto* v = get("denoiser.kind")) cfg.denoiser_kind = *v;
    if (auto* v = get("denoiser.seed")) cfg.denoiser_seed = std::stoull(*v);
    if (auto* v = get("denoiser.mu0")) cfg.denoiser_mu0 = std::stod(*v);
    if (auto* v = get("denoiser.s0")) cfg.denoiser_s0 = std::stod(*v);
    if (auto* v = get("denoiser.channels"))
        cfg.denoiser_channels = std::stoi(*v);
    if (auto* v = get("d_cond")) cfg.d_cond = std::stoi(*v);
    if (auto* v = get("condition_seed")) cfg.condition_seed = std::stoull(*v);
}

}  // namespace rival
