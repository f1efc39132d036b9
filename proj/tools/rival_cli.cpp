#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "rival/config.hpp"
#include "rival/fsutil.hpp"
#include "rival/image.hpp"
#include "rival/metrics.hpp"
#include "rival/pipeline.hpp"

namespace fs = std::filesystem;
using namespace rival;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::string chain_dir;
    std::optional<std::uint64_t> seed;
};

RunConfig resolve_config(const CommonOpts& opts) {
    RunConfig cfg;
    if (!opts.config_path.empty()) cfg = parse_config(opts.config_path);
    if (opts.seed) cfg.seed = *opts.seed;
    return cfg;
}

// Chain-bound identity (schedule, denoiser, conditioning dims) always comes
// from the manifest; the config file only adjusts generation knobs.
RunConfig resolve_generation_config(const CommonOpts& opts,
                                    const LoadedChain& loaded) {
    RunConfig cfg = resolve_config(opts);
    apply_extras(cfg, loaded.extras);
    cfg.train_steps = loaded.schedule.train_steps;
    cfg.inference_steps = loaded.schedule.inference_steps;
    cfg.beta_start = loaded.schedule.beta_start;
    cfg.beta_end = loaded.schedule.beta_end;
    if (cfg.t_align > cfg.inference_steps || cfg.t_early > cfg.inference_steps)
        throw ConfigError("t_align/t_early exceed the chain's inference_steps");
    return cfg;
}

void write_config_echo(const fs::path& dir, const RunConfig& cfg) {
    write_file_atomic(dir / "config.txt", serialize_config(cfg));
}

std::string steps_table(const RunDiagnostics& diag) {
    std::string out = "# step mode kl kl_valid [site:score ...]\n";
    char buf[96];
    for (const StepDiagnostics& s : diag.steps) {
        std::snprintf(buf, sizeof(buf), "%d %s %.17g %d", s.step,
                      to_string(s.mode), s.kl, s.kl_valid ? 1 : 0);
        out += buf;
        for (const auto& [site, score] : s.score_ref) {
            std::snprintf(buf, sizeof(buf), " %s:%.17g", site.c_str(), score);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

RunDiagnostics parse_steps_table(const std::string& text) {
    RunDiagnostics diag;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        std::istringstream row(line);
        StepDiagnostics s;
        std::string mode_str;
        int valid = 0;
        if (!(row >> s.step >> mode_str >> s.kl >> valid))
            throw FormatError("steps.txt: malformed row '" + line + "'");
        s.mode = injection_mode_from_string(mode_str);
        s.kl_valid = valid != 0;
        std::string pair;
        while (row >> pair) {
            auto colon = pair.rfind(':');
            if (colon == std::string::npos)
                throw FormatError("steps.txt: malformed score '" + pair + "'");
            s.score_ref[pair.substr(0, colon)] =
                std::stod(pair.substr(colon + 1));
        }
        diag.steps.push_back(std::move(s));
    }
    return diag;
}

TraceSeries kl_series_from_steps(const RunDiagnostics& diag) {
    TraceSeries series;
    for (const StepDiagnostics& s : diag.steps)
        if (s.kl_valid) series.points.push_back({s.step, s.kl});
    return series;
}

void write_run_outputs(const fs::path& out, const GenerateResult& result,
                       const ChainRecord& chain, const RunConfig& cfg) {
    fs::create_directories(out / "diagnostics");
    save_png(out / "output.png", decode_latent(result.latent));
    save_trace_csv(out / "kl.csv", kl_trace(result.diagnostics, chain));
    save_trace_csv(out / "score.csv", score_trace(result.diagnostics));
    write_file_atomic(out / "diagnostics" / "steps.txt",
                      steps_table(result.diagnostics));
    for (std::size_t j = 0; j < result.diagnostics.gen_latents.size(); ++j) {
        char name[40];
        std::snprintf(name, sizeof(name), "gen_latent_%03d.rivl",
                      static_cast<int>(j));
        save_latent(out / "diagnostics" / name,
                    result.diagnostics.gen_latents[j]);
    }
    write_config_echo(out, cfg);
}

InpaintSpec mask_from_png(const fs::path& path, int height, int width) {
    Raster raster = load_png(path);
    if (raster.height != height || raster.width != width)
        throw InvalidInputError(
            "mask size " + std::to_string(raster.width) + "x" +
            std::to_string(raster.height) + " does not match latent " +
            std::to_string(width) + "x" + std::to_string(height));
    InpaintSpec spec;
    spec.height = height;
    spec.width = width;
    spec.mask.resize(raster.pixel_count(), 0);
    for (std::size_t p = 0; p < raster.pixel_count(); ++p) {
        const bool regen = raster.pixels[p * 3] || raster.pixels[p * 3 + 1] ||
                           raster.pixels[p * 3 + 2];
        spec.mask[p] = regen ? 1 : 0;
    }
    return spec;
}

int run_invert(const CommonOpts& opts, const std::string& image_path) {
    RunConfig cfg = resolve_config(opts);
    if (cfg.denoiser_channels != 3)
        throw ConfigError("invert: identity pixel codec needs denoiser.channels = 3");
    const LatentTensor x0 = encode_latent(load_png(image_path));
    const NoiseSchedule schedule = schedule_from_config(cfg);
    const auto denoiser = denoiser_from_config(cfg);
    const Condition source = condition_from_config(cfg);
    const Condition cond =
        cfg.inversion_condition == InversionCondition::Empty
            ? Condition::null_condition(cfg.d_cond)
            : source;
    ChainRecord chain = invert(x0, cond, schedule, *denoiser);
    save_chain(opts.out_dir, chain, schedule, config_extras(cfg));
    write_config_echo(opts.out_dir, cfg);
    return 0;
}

enum class GenKind { Variation, Edit, Inpaint };

int run_generation(const CommonOpts& opts, GenKind kind,
                   const std::string& mask_path, int start_step) {
    LoadedChain loaded = load_chain(opts.chain_dir);
    RunConfig cfg = resolve_generation_config(opts, loaded);
    const auto denoiser = denoiser_from_config(cfg);
    SeededRng rng(cfg.seed);

    GenerateResult result;
    switch (kind) {
        case GenKind::Variation:
            result = rival_generate(loaded.chain, condition_from_config(cfg),
                                    to_rival_config(cfg), loaded.schedule,
                                    *denoiser, rng);
            break;
        case GenKind::Edit: {
            if (start_step < 0) start_step = 45;
            result = edit_generate(loaded.chain,
                                   edit_condition_from_config(cfg),
                                   to_rival_config(cfg), loaded.schedule,
                                   *denoiser, start_step, rng);
            break;
        }
        case GenKind::Inpaint: {
            const LatentTensor& x0 = loaded.chain.latents.at(0);
            InpaintSpec spec = mask_from_png(mask_path, x0.height, x0.width);
            result = inpaint_generate(loaded.chain, spec,
                                      condition_from_config(cfg),
                                      to_rival_config(cfg), loaded.schedule,
                                      *denoiser, rng);
            break;
        }
    }
    write_run_outputs(opts.out_dir, result, loaded.chain, cfg);
    return 0;
}

int run_trace(const std::string& run_dir, const std::string& out_dir) {
    const fs::path steps_path = fs::path(run_dir) / "diagnostics" / "steps.txt";
    if (!fs::exists(steps_path))
        throw FormatError("no diagnostics found under " + run_dir);
    RunDiagnostics diag = parse_steps_table(read_file(steps_path));
    fs::create_directories(out_dir);
    save_trace_csv(fs::path(out_dir) / "kl.csv", kl_series_from_steps(diag));
    save_trace_csv(fs::path(out_dir) / "score.csv", score_trace(diag));
    return 0;
}

int run_metrics(const CommonOpts& opts, const std::string& image_a,
                const std::string& image_b) {
    RunConfig cfg = resolve_config(opts);
    SeededRng rng_a(cfg.seed);
    SeededRng rng_b(cfg.seed);
    Palette pa = kmeans_palette(load_png(image_a), cfg.palette_k, rng_a);
    Palette pb = kmeans_palette(load_png(image_b), cfg.palette_k, rng_b);
    std::printf("%.6f\n", palette_distance(pa, pb));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Training-free image variation by aligning the generation chain to a "
        "reference inversion chain"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string image_path, mask_path, image_a, image_b, run_dir;
    int start_step = -1;

    auto add_common = [&](CLI::App* cmd, bool with_chain, bool with_out) {
        cmd->add_option("--config", opts.config_path,
                        "key = value configuration file");
        cmd->add_option("--seed", opts.seed, "override the run seed");
        if (with_chain)
            cmd->add_option("--chain", opts.chain_dir, "chain directory")
                ->required();
        if (with_out)
            cmd->add_option("--out", opts.out_dir, "output directory")
                ->required();
    };

    CLI::App* invert_cmd =
        app.add_subcommand("invert", "invert an image into a chain directory");
    invert_cmd->add_option("image", image_path, "input PNG")->required();
    add_common(invert_cmd, false, true);

    CLI::App* variation_cmd =
        app.add_subcommand("variation", "generate a variation from a chain");
    add_common(variation_cmd, true, true);

    CLI::App* edit_cmd = app.add_subcommand(
        "edit", "structure-preserved generation with the edit condition");
    add_common(edit_cmd, true, true);
    edit_cmd->add_option("--start-step", start_step,
                         "chain level at which injection starts (default 45)");

    CLI::App* inpaint_cmd =
        app.add_subcommand("inpaint", "regenerate masked regions only");
    add_common(inpaint_cmd, true, true);
    inpaint_cmd->add_option("--mask", mask_path, "mask PNG (nonzero = regenerate)")
        ->required();

    CLI::App* trace_cmd = app.add_subcommand(
        "trace", "re-emit kl/score CSVs from a run's diagnostics");
    trace_cmd->add_option("run_dir", run_dir, "previous run directory")
        ->required();
    trace_cmd->add_option("--out", opts.out_dir, "output directory")
        ->required();

    CLI::App* metrics_cmd = app.add_subcommand(
        "metrics", "palette distance between two images");
    metrics_cmd->add_option("image_a", image_a, "first PNG")->required();
    metrics_cmd->add_option("image_b", image_b, "second PNG")->required();
    add_common(metrics_cmd, false, false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (invert_cmd->parsed()) return run_invert(opts, image_path);
        if (variation_cmd->parsed())
            return run_generation(opts, GenKind::Variation, "", -1);
        if (edit_cmd->parsed())
            return run_generation(opts, GenKind::Edit, "", start_step);
        if (inpaint_cmd->parsed())
            return run_generation(opts, GenKind::Inpaint, mask_path, -1);
        if (trace_cmd->parsed()) return run_trace(run_dir, opts.out_dir);
        if (metrics_cmd->parsed()) return run_metrics(opts, image_a, image_b);
    } catch (const DivergenceError& e) {
        if (!opts.out_dir.empty()) {
            std::error_code ec;
            fs::create_directories(opts.out_dir, ec);
            if (!ec) {
                save_latent(fs::path(opts.out_dir) / "diverged_latent.rivl",
                            e.last_latent);
                save_latent(fs::path(opts.out_dir) / "diverged_eps.rivl",
                            e.last_eps);
            }
        }
        std::cerr << "error: " << e.what() << " (tensor dump written)\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
