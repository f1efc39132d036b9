#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "rival/config.hpp"
#include "rival/image.hpp"
#include "rival/metrics.hpp"
#include "rival/pipeline.hpp"

namespace py = pybind11;
using namespace rival;

namespace {

LatentTensor latent_from_array(py::array_t<double, py::array::c_style |
                                                       py::array::forcecast>
                                   arr) {
    if (arr.ndim() != 3)
        throw InvalidInputError("latent array must be (channels, height, width)");
    LatentTensor x(static_cast<int>(arr.shape(0)),
                   static_cast<int>(arr.shape(1)),
                   static_cast<int>(arr.shape(2)));
    std::copy(arr.data(), arr.data() + x.size(), x.data.begin());
    return x;
}

py::array_t<double> latent_to_array(const LatentTensor& x) {
    py::array_t<double> arr({x.channels, x.height, x.width});
    std::copy(x.data.begin(), x.data.end(), arr.mutable_data());
    return arr;
}

Raster raster_from_array(
    py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> arr) {
    if (arr.ndim() != 3 || arr.shape(2) != 3)
        throw InvalidInputError("image array must be (height, width, 3) uint8");
    Raster img(static_cast<int>(arr.shape(1)), static_cast<int>(arr.shape(0)));
    std::copy(arr.data(), arr.data() + img.pixels.size(), img.pixels.begin());
    return img;
}

py::array_t<std::uint8_t> raster_to_array(const Raster& img) {
    py::array_t<std::uint8_t> arr({img.height, img.width, 3});
    std::copy(img.pixels.begin(), img.pixels.end(), arr.mutable_data());
    return arr;
}

InpaintSpec mask_from_array(
    py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> arr) {
    if (arr.ndim() != 2)
        throw InvalidInputError("mask array must be (height, width)");
    InpaintSpec spec;
    spec.height = static_cast<int>(arr.shape(0));
    spec.width = static_cast<int>(arr.shape(1));
    spec.mask.assign(arr.data(), arr.data() + spec.height * spec.width);
    return spec;
}

py::dict diagnostics_to_dict(const RunDiagnostics& diag) {
    py::list steps;
    for (const StepDiagnostics& s : diag.steps) {
        py::dict d;
        d["step"] = s.step;
        d["mode"] = std::string(to_string(s.mode));
        d["kl"] = s.kl;
        d["kl_valid"] = s.kl_valid;
        d["score_ref"] = s.score_ref;
        steps.append(d);
    }
    py::list latents;
    for (const LatentTensor& x : diag.gen_latents)
        latents.append(latent_to_array(x));
    py::dict out;
    out["steps"] = steps;
    out["gen_latents"] = latents;
    return out;
}

RivalConfig config_from_kwargs(const py::kwargs& kwargs) {
    RivalConfig cfg;
    for (auto item : kwargs) {
        const std::string key = py::cast<std::string>(item.first);
        if (key == "inference_steps")
            cfg.inference_steps = py::cast<int>(item.second);
        else if (key == "guidance_scale" || key == "m")
            cfg.guidance_scale = py::cast<double>(item.second);
        else if (key == "t_align") cfg.t_align = py::cast<int>(item.second);
        else if (key == "t_early") cfg.t_early = py::cast<int>(item.second);
        else if (key == "init_mode")
            cfg.init_mode =
                init_mode_from_string(py::cast<std::string>(item.second));
        else if (key == "attention_injection")
            cfg.attention_injection = py::cast<bool>(item.second);
        else if (key == "attention_fusion")
            cfg.attention_fusion = py::cast<bool>(item.second);
        else if (key == "latent_init")
            cfg.latent_init = py::cast<bool>(item.second);
        else if (key == "noise_align")
            cfg.noise_align = py::cast<bool>(item.second);
        else if (key == "seed")
            cfg.seed = py::cast<std::uint64_t>(item.second);
        else
            throw InvalidInputError("unknown config field '" + key + "'");
    }
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Training-free image variation by inversion-chain alignment";

    py::register_exception<InvalidInputError>(m, "InvalidInputError",
                                              PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigurationError",
                                        PyExc_ValueError);
    py::register_exception<MissingCacheError>(m, "MissingCacheError",
                                              PyExc_KeyError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<DegenerateDistributionError>(
        m, "DegenerateDistributionError", PyExc_ValueError);

    py::class_<SeededRng>(m, "SeededRng")
        .def(py::init<std::uint64_t>(), py::arg("seed"))
        .def("next_u64", &SeededRng::next_u64)
        .def("next_double", &SeededRng::next_double)
        .def("next_normal", &SeededRng::next_normal)
        .def("bounded", &SeededRng::bounded, py::arg("n"));

    py::class_<Condition>(m, "Condition")
        .def_static("null", &Condition::null_condition, py::arg("dim"))
        .def_static("from_seed", &Condition::from_seed, py::arg("seed"),
                    py::arg("dim"))
        .def_readonly("embedding", &Condition::embedding)
        .def_readonly("is_null", &Condition::is_null);

    py::class_<NoiseSchedule>(m, "NoiseSchedule")
        .def_readonly("train_steps", &NoiseSchedule::train_steps)
        .def_readonly("inference_steps", &NoiseSchedule::inference_steps)
        .def_readonly("grid", &NoiseSchedule::grid)
        .def_readonly("k", &NoiseSchedule::k)
        .def_readonly("alpha_bar", &NoiseSchedule::alpha_bar)
        .def_readonly("ddim_beta", &NoiseSchedule::ddim_beta)
        .def("alpha_at", &NoiseSchedule::alpha_at, py::arg("chain_index"));

    m.def(
        "build_schedule",
        [](int train_steps, int inference_steps, double beta_start,
           double beta_end) {
            return build_schedule(train_steps, inference_steps, beta_start,
                                  beta_end);
        },
        py::arg("train_steps") = 1000, py::arg("inference_steps") = 50,
        py::arg("beta_start") = 0.00085, py::arg("beta_end") = 0.012);

    py::class_<Denoiser>(m, "Denoiser")
        .def("channels", &Denoiser::channels)
        .def("attention_sites", &Denoiser::attention_sites)
        .def(
            "predict_eps",
            [](const Denoiser& self, py::array_t<double> x, int train_timestep,
               double alpha_bar, const Condition& cond) {
                return latent_to_array(self.predict_eps(
                    latent_from_array(x), train_timestep, alpha_bar, cond));
            },
            py::arg("x"), py::arg("train_timestep"), py::arg("alpha_bar"),
            py::arg("cond"));

    py::class_<AnalyticGaussianDenoiser, Denoiser>(m,
                                                   "AnalyticGaussianDenoiser")
        .def(py::init<std::vector<double>, double>(), py::arg("mu0"),
             py::arg("s0"));

    py::class_<ToyDenoiserParams>(m, "ToyDenoiserParams")
        .def(py::init<>())
        .def_readwrite("channels", &ToyDenoiserParams::channels)
        .def_readwrite("token_dim", &ToyDenoiserParams::token_dim)
        .def_readwrite("cond_dim", &ToyDenoiserParams::cond_dim)
        .def_readwrite("n_sites", &ToyDenoiserParams::n_sites)
        .def_readwrite("train_steps", &ToyDenoiserParams::train_steps)
        .def_readwrite("seed", &ToyDenoiserParams::seed);

    py::class_<ToyAttentionDenoiser, Denoiser>(m, "ToyAttentionDenoiser")
        .def(py::init<const ToyDenoiserParams&>(), py::arg("params"));

    py::class_<ChainRecord>(m, "ChainRecord")
        .def_property_readonly(
            "latents",
            [](const ChainRecord& c) {
                py::list out;
                for (const LatentTensor& x : c.latents)
                    out.append(latent_to_array(x));
                return out;
            })
        .def_property_readonly("condition",
                               [](const ChainRecord& c) { return c.condition; })
        .def("levels", &ChainRecord::levels)
        .def("hidden_size", [](const ChainRecord& c) { return c.hidden.size(); });

    py::class_<GenerateResult>(m, "GenerateResult")
        .def_property_readonly(
            "latent",
            [](const GenerateResult& r) { return latent_to_array(r.latent); })
        .def_property_readonly("diagnostics", [](const GenerateResult& r) {
            return diagnostics_to_dict(r.diagnostics);
        });

    // latent-core operations over numpy arrays
    m.def("stats", [](py::array_t<double> x) {
        LatentStats s = stats(latent_from_array(x));
        return py::make_tuple(s.mean, s.stddev);
    });
    m.def("shuffle_spatial", [](py::array_t<double> x, SeededRng& rng) {
        return latent_to_array(shuffle_spatial(latent_from_array(x), rng));
    });
    m.def("sample_standard_gaussian",
          [](int c, int h, int w, SeededRng& rng) {
              return latent_to_array(sample_standard_gaussian(c, h, w, rng));
          });
    m.def("sample_adaptive_gaussian",
          [](std::vector<double> mean, std::vector<double> stddev, int h,
             int w, SeededRng& rng) {
              LatentStats s;
              s.mean = std::move(mean);
              s.stddev = std::move(stddev);
              return latent_to_array(sample_adaptive_gaussian(
                  s, static_cast<int>(s.mean.size()), h, w, rng));
          });
    m.def("adain", [](py::array_t<double> a, py::array_t<double> b) {
        return latent_to_array(adain(latent_from_array(a),
                                     latent_from_array(b)));
    });
    m.def("kl_gaussian_fit", [](py::array_t<double> a, py::array_t<double> b) {
        return kl_gaussian_fit(latent_from_array(a), latent_from_array(b));
    });
    m.def("save_latent", [](const std::filesystem::path& p,
                            py::array_t<double> x) {
        save_latent(p, latent_from_array(x));
    });
    m.def("load_latent", [](const std::filesystem::path& p) {
        return latent_to_array(load_latent(p));
    });

    // schedule step maps
    m.def("forward_diffuse",
          [](py::array_t<double> x0, int t, py::array_t<double> w,
             const NoiseSchedule& s) {
              return latent_to_array(forward_diffuse(latent_from_array(x0), t,
                                                     latent_from_array(w), s));
          });
    m.def("ddim_step",
          [](py::array_t<double> x, py::array_t<double> eps, int t_from,
             int t_to, const NoiseSchedule& s) {
              return latent_to_array(ddim_step(latent_from_array(x),
                                               latent_from_array(eps), t_from,
                                               t_to, s));
          });
    m.def("ddim_invert_step",
          [](py::array_t<double> x, py::array_t<double> eps, int t_from,
             int t_to, const NoiseSchedule& s) {
              return latent_to_array(
                  ddim_invert_step(latent_from_array(x),
                                   latent_from_array(eps), t_from, t_to, s));
          });
    m.def("ddpm_step",
          [](py::array_t<double> x, py::array_t<double> eps, int t,
             SeededRng& rng, const NoiseSchedule& s) {
              return latent_to_array(ddpm_step(latent_from_array(x),
                                               latent_from_array(eps), t, rng,
                                               s));
          });

    // pipeline
    m.def(
        "invert",
        [](py::array_t<double> x0, const Condition& cond,
           const NoiseSchedule& s, const Denoiser& d, bool record_eps) {
            return invert(latent_from_array(x0), cond, s, d, record_eps);
        },
        py::arg("x0"), py::arg("cond"), py::arg("schedule"),
        py::arg("denoiser"), py::arg("record_eps") = true);
    m.def(
        "rival_generate",
        [](const ChainRecord& chain, const Condition& cond,
           const NoiseSchedule& s, const Denoiser& d, const py::kwargs& kw) {
            RivalConfig cfg = config_from_kwargs(kw);
            cfg.inference_steps = s.inference_steps;
            SeededRng rng(cfg.seed);
            return rival_generate(chain, cond, cfg, s, d, rng);
        },
        py::arg("chain"), py::arg("cond"), py::arg("schedule"),
        py::arg("denoiser"));
    m.def(
        "inpaint_generate",
        [](const ChainRecord& chain, py::array_t<std::uint8_t> mask,
           const Condition& cond, const NoiseSchedule& s, const Denoiser& d,
           const py::kwargs& kw) {
            RivalConfig cfg = config_from_kwargs(kw);
            cfg.inference_steps = s.inference_steps;
            SeededRng rng(cfg.seed);
            return inpaint_generate(chain, mask_from_array(mask), cond, cfg, s,
                                    d, rng);
        },
        py::arg("chain"), py::arg("mask"), py::arg("cond"),
        py::arg("schedule"), py::arg("denoiser"));
    m.def(
        "edit_generate",
        [](const ChainRecord& chain, const Condition& new_cond,
           const NoiseSchedule& s, const Denoiser& d, int interaction_start,
           const py::kwargs& kw) {
            RivalConfig cfg = config_from_kwargs(kw);
            cfg.inference_steps = s.inference_steps;
            SeededRng rng(cfg.seed);
            return edit_generate(chain, new_cond, cfg, s, d,
                                 interaction_start, rng);
        },
        py::arg("chain"), py::arg("new_cond"), py::arg("schedule"),
        py::arg("denoiser"), py::arg("interaction_start") = 45);
    m.def("cfg_eps", [](py::array_t<double> c, py::array_t<double> u,
                        double guidance) {
        return latent_to_array(
            cfg_eps(latent_from_array(c), latent_from_array(u), guidance));
    });
    m.def("save_chain",
          [](const std::filesystem::path& dir, const ChainRecord& chain,
             const NoiseSchedule& s) { save_chain(dir, chain, s); });
    m.def("load_chain", [](const std::filesystem::path& dir) {
        LoadedChain loaded = load_chain(dir);
        return py::make_tuple(std::move(loaded.chain), loaded.schedule,
                              loaded.extras);
    });

    // attention policy
    m.def("policy_mode", [](int t, int t_align, bool enabled, bool fusion) {
        return std::string(
            to_string(policy_mode(t, InjectionPolicy{t_align, enabled, fusion})));
    });

    // image codec
    m.def("load_png", [](const std::filesystem::path& p) {
        return raster_to_array(load_png(p));
    });
    m.def("save_png", [](const std::filesystem::path& p,
                         py::array_t<std::uint8_t> img) {
        save_png(p, raster_from_array(img));
    });
    m.def("encode_latent", [](py::array_t<std::uint8_t> img) {
        return latent_to_array(encode_latent(raster_from_array(img)));
    });
    m.def("decode_latent", [](py::array_t<double> x) {
        return raster_to_array(decode_latent(latent_from_array(x)));
    });

    // metrics
    m.def(
        "kmeans_palette",
        [](py::array_t<std::uint8_t> img, int k, std::uint64_t seed,
           int iters) {
            SeededRng rng(seed);
            Palette p = kmeans_palette(raster_from_array(img), k, rng, iters);
            py::list out;
            for (const PaletteColor& c : p.colors)
                out.append(py::make_tuple(c[0], c[1], c[2]));
            return out;
        },
        py::arg("image"), py::arg("k") = 10, py::arg("seed") = 0,
        py::arg("iters") = 50);
    m.def("palette_distance",
          [](const std::vector<std::array<double, 3>>& a,
             const std::vector<std::array<double, 3>>& b) {
              Palette pa, pb;
              pa.colors = a;
              pb.colors = b;
              return palette_distance(pa, pb);
          });

    // run configuration
    m.def("parse_config_text", [](const std::string& text) {
        RunConfig cfg = parse_config_text(text);
        py::dict d;
        d["train_steps"] = cfg.train_steps;
        d["inference_steps"] = cfg.inference_steps;
        d["beta_start"] = cfg.beta_start;
        d["beta_end"] = cfg.beta_end;
        d["m"] = cfg.m;
        d["t_align"] = cfg.t_align;
        d["t_early"] = cfg.t_early;
        d["init_mode"] = std::string(to_string(cfg.init_mode));
        d["attention_injection"] = cfg.attention_injection;
        d["attention_fusion"] = cfg.attention_fusion;
        d["latent_init"] = cfg.latent_init;
        d["noise_align"] = cfg.noise_align;
        d["seed"] = cfg.seed;
        d["denoiser.kind"] = cfg.denoiser_kind;
        return d;
    });
}
