"""Training-free image variation by aligning the generation chain to a
reference DDIM inversion chain.

The heavy lifting lives in the C++ extension; this package re-exports it.
"""

from ._core import (  # noqa: F401
    AnalyticGaussianDenoiser,
    ChainRecord,
    Condition,
    ConfigurationError,
    DegenerateDistributionError,
    Denoiser,
    FormatError,
    GenerateResult,
    InvalidInputError,
    MissingCacheError,
    NoiseSchedule,
    SeededRng,
    ToyAttentionDenoiser,
    ToyDenoiserParams,
    adain,
    build_schedule,
    cfg_eps,
    ddim_invert_step,
    ddim_step,
    ddpm_step,
    decode_latent,
    edit_generate,
    encode_latent,
    forward_diffuse,
    inpaint_generate,
    invert,
    kl_gaussian_fit,
    kmeans_palette,
    load_chain,
    load_latent,
    load_png,
    palette_distance,
    parse_config_text,
    policy_mode,
    rival_generate,
    sample_adaptive_gaussian,
    sample_standard_gaussian,
    save_chain,
    save_latent,
    save_png,
    shuffle_spatial,
    stats,
)

__version__ = "0.1.0"
