"""Smoke tests for the python extension module."""

import numpy as np
import pytest

import rival


@pytest.fixture(scope="module")
def schedule():
    return rival.build_schedule(1000, 10, 0.00085, 0.012)


@pytest.fixture(scope="module")
def toy():
    params = rival.ToyDenoiserParams()
    params.channels = 2
    params.seed = 5
    return rival.ToyAttentionDenoiser(params)


def test_version():
    assert rival.__version__


def test_seeded_rng_is_deterministic():
    a = rival.SeededRng(42)
    b = rival.SeededRng(42)
    assert [a.next_normal() for _ in range(5)] == [
        b.next_normal() for _ in range(5)
    ]


def test_stats_and_adain_roundtrip():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(3, 8, 8))
    b = 2.5 * rng.normal(size=(3, 8, 8)) + 1.0
    out = rival.adain(a, b)
    mean_out, std_out = rival.stats(out)
    mean_b, std_b = rival.stats(b)
    np.testing.assert_allclose(mean_out, mean_b, atol=1e-9)
    np.testing.assert_allclose(std_out, std_b, atol=1e-9)


def test_shuffle_preserves_multiset():
    x = np.arange(2 * 4 * 4, dtype=np.float64).reshape(2, 4, 4)
    rng = rival.SeededRng(7)
    y = rival.shuffle_spatial(x, rng)
    assert sorted(x.ravel()) == sorted(y.ravel())
    assert y.shape == (2, 4, 4)


def test_schedule_shape(schedule):
    assert schedule.inference_steps == 10
    assert len(schedule.grid) == 10
    assert schedule.alpha_at(0) == 1.0
    assert schedule.alpha_at(10) < schedule.alpha_at(1)


def test_ddim_inverse_property(schedule):
    rng = rival.SeededRng(3)
    x = rival.sample_standard_gaussian(1, 4, 4, rng)
    eps = rival.sample_standard_gaussian(1, 4, 4, rng)
    up = rival.ddim_invert_step(x, eps, 2, 3, schedule)
    back = rival.ddim_step(up, eps, 3, 2, schedule)
    np.testing.assert_allclose(back, x, atol=1e-9)


def test_invert_and_generate(schedule, toy):
    rng = np.random.default_rng(1)
    x0 = rng.normal(size=(2, 4, 4))
    cond = rival.Condition.from_seed(9, 16)
    chain = rival.invert(x0, cond, schedule, toy)
    assert chain.levels() == 11
    assert chain.hidden_size() == 20

    result = rival.rival_generate(
        chain, cond, schedule, toy, seed=4, t_align=5, t_early=5, m=2.0
    )
    assert result.latent.shape == (2, 4, 4)
    diag = result.diagnostics
    assert len(diag["steps"]) == 10
    modes = {s["mode"] for s in diag["steps"]}
    assert modes == {"replace", "fuse"}

    again = rival.rival_generate(
        chain, cond, schedule, toy, seed=4, t_align=5, t_early=5, m=2.0
    )
    np.testing.assert_array_equal(result.latent, again.latent)


def test_edit_and_inpaint(schedule, toy):
    rng = np.random.default_rng(2)
    x0 = rng.normal(size=(2, 4, 4))
    cond = rival.Condition.from_seed(1, 16)
    chain = rival.invert(x0, cond, schedule, toy)

    edited = rival.edit_generate(
        chain,
        rival.Condition.from_seed(2, 16),
        schedule,
        toy,
        interaction_start=8,
        seed=1,
        t_align=5,
        t_early=5,
    )
    assert edited.latent.shape == (2, 4, 4)

    mask = np.zeros((4, 4), dtype=np.uint8)
    mask[:, 2:] = 1
    res = rival.inpaint_generate(
        chain, mask, cond, schedule, toy, seed=1, t_align=5, t_early=5
    )
    ref = np.asarray(chain.latents[0])
    np.testing.assert_array_equal(res.latent[:, :, :2], ref[:, :, :2])


def test_cfg_collapse():
    rng = np.random.default_rng(3)
    c = rng.normal(size=(1, 3, 3))
    u = rng.normal(size=(1, 3, 3))
    np.testing.assert_array_equal(rival.cfg_eps(c, u, 1.0), c)
    np.testing.assert_array_equal(rival.cfg_eps(c, u, 0.0), u)


def test_policy_mode():
    assert rival.policy_mode(45, 30, True, True) == "replace"
    assert rival.policy_mode(30, 30, True, True) == "fuse"
    assert rival.policy_mode(30, 30, True, False) == "replace"
    assert rival.policy_mode(10, 30, False, True) == "off"


def test_png_and_codec(tmp_path):
    rng = np.random.default_rng(4)
    img = rng.integers(0, 256, size=(6, 5, 3), dtype=np.uint8)
    path = tmp_path / "img.png"
    rival.save_png(path, img)
    back = rival.load_png(path)
    np.testing.assert_array_equal(back, img)

    latent = rival.encode_latent(img)
    assert latent.shape == (3, 6, 5)
    decoded = rival.decode_latent(latent)
    np.testing.assert_array_equal(decoded, img)


def test_chain_io(tmp_path, schedule, toy):
    rng = np.random.default_rng(5)
    x0 = rng.normal(size=(2, 3, 3))
    cond = rival.Condition.from_seed(3, 16)
    chain = rival.invert(x0, cond, schedule, toy)
    rival.save_chain(tmp_path / "chain", chain, schedule)
    loaded, loaded_schedule, extras = rival.load_chain(tmp_path / "chain")
    assert loaded.levels() == chain.levels()
    assert loaded_schedule.inference_steps == schedule.inference_steps
    np.testing.assert_array_equal(
        np.asarray(loaded.latents[0]), np.asarray(chain.latents[0])
    )


def test_palette_metric():
    img = np.full((4, 4, 3), 128, dtype=np.uint8)
    palette = rival.kmeans_palette(img, k=3, seed=0)
    assert len(palette) == 3
    for color in palette:
        np.testing.assert_allclose(color, 128.0 / 255.0, atol=1e-12)
    assert rival.palette_distance(palette, palette) == 0.0


def test_config_defaults():
    cfg = rival.parse_config_text("")
    assert cfg["inference_steps"] == 50
    assert cfg["m"] == 7.0
    assert cfg["t_align"] == 30
    assert cfg["t_early"] == 30
    with pytest.raises(ValueError):
        rival.parse_config_text("bogus = 1\n")


def test_error_mapping():
    with pytest.raises(ValueError):
        rival.kl_gaussian_fit(np.ones((1, 2, 2)), np.ones((1, 2, 2)))
