"""Benchmark systems: sampling, layouts, limit states and solver wiring."""
import numpy as np
import pytest
from scipy import special

from piwno.grids import grf_bank, sample_seeds, trig_source_bank
from piwno.problems import AC_FRAMES, AC_HISTORY, DEFAULT_SETTINGS, EXAMPLES, make_problem
from piwno.reliability import peak_response


def small(example):
    return make_problem(example, resolution=17)


@pytest.mark.parametrize("example", EXAMPLES)
def test_sampling_is_deterministic_and_seed_sensitive(example):
    p = small(example)
    a, b, c = p.sample(3, 4), p.sample(3, 4), p.sample(4, 4)
    assert np.array_equal(a["raw"], b["raw"]) and np.array_equal(a["seeds"], b["seeds"])
    assert not np.allclose(a["raw"], c["raw"])
    # a prefix of a larger bank equals the smaller bank
    assert np.array_equal(p.sample(3, 6)["raw"][:4], a["raw"])


@pytest.mark.parametrize("example,raw_shape,enc_shape,sol_shape", [
    ("diffusion_reaction", (2, 17), (2, 17, 17, 1), (2, 17, 17)),
    ("nagumo", (2, 17), (2, 17, 17, 1), (2, 17, 17)),
    ("darcy", (2, 17, 17), (2, 17, 17, 1), (2, 17, 17)),
    ("allen_cahn", (2, AC_HISTORY, 17, 17), (2, 17, 17, AC_HISTORY), (2, AC_FRAMES - AC_HISTORY, 17, 17)),
])
def test_layouts(example, raw_shape, enc_shape, sol_shape):
    p = small(example)
    raw = p.sample(0, 2)["raw"]
    assert raw.shape == raw_shape
    enc = p.encode(raw)
    assert enc.shape == enc_shape
    assert p.solve(raw).shape == sol_shape
    cfg = p.wno_config(width=4, levels=2)
    assert cfg.grid_shape == enc_shape[1:3] and cfg.in_channels == enc_shape[-1]
    assert cfg.out_channels == (sol_shape[1] if example == "allen_cahn" else 1)


def test_one_dimensional_encoding_repeats_along_time():
    p = small("nagumo")
    raw = p.sample(0, 1)["raw"]
    enc = p.encode(raw)[0, :, :, 0]
    assert np.all(enc == raw[0][:, None])
    with pytest.raises(ValueError):
        p.encode(raw[:, :-1])


def test_default_probe_node():
    p = make_problem("diffusion_reaction")
    assert p.n == 81 and p.probe_index == 41
    assert make_problem("nagumo").probe_index == 32
    assert make_problem("darcy").probe_index is None


def test_limit_state_kinds():
    assert small("diffusion_reaction").limit_state().probe == "point"
    d = small("darcy").limit_state()
    assert d.probe == "field_max" and d.time_axis is None
    ac = small("allen_cahn").limit_state(0.5)
    assert ac.window == DEFAULT_SETTINGS["allen_cahn"].window and ac.e_h == 0.5
    with pytest.raises(ValueError):
        make_problem("allen_cahn", resolution=17, window=(10, AC_FRAMES)).limit_state()
    with pytest.raises(ValueError):
        make_problem("darcy", window=(1, 2))
    with pytest.raises(ValueError):
        make_problem("heat")
    with pytest.raises(ValueError):
        make_problem("darcy", resolution=8)


def test_diffusion_reaction_latent_is_uniform():
    latent = small("diffusion_reaction").sample(0, 4000)["latent"]
    assert latent.min() >= 0 and latent.max() <= 1
    # mean 1/2 and variance 1/12 within five standard errors
    assert np.abs(latent.mean(axis=0) - 0.5).max() < 5 * np.sqrt(1 / 12 / 4000)
    assert np.abs(latent.var(axis=0) - 1 / 12).max() < 0.01


def test_darcy_permeability_is_two_valued():
    d = small("darcy").sample(0, 3)
    assert set(np.unique(d["raw"])) <= {3.0, 12.0}
    assert np.array_equal(d["raw"] == 12.0, d["latent"] >= 0)
    e = make_problem("darcy", resolution=17, pushforward="exp").sample(0, 3)
    assert np.allclose(e["raw"], np.exp(e["latent"]))


def test_allen_cahn_reference_std_matches_empirical():
    p = make_problem("allen_cahn", resolution=16, input_std=None)
    # the raw draws only; sampling would also integrate the history frames
    u0 = grf_bank(p.settings.grf, p.grid, sample_seeds(0, 3000))
    # 3000 draws: the empirical pointwise std is within a few percent
    assert u0.std() == pytest.approx(p.ac_reference_std(), rel=0.03)
    assert np.array_equal(p.sample(0, 2)["latent"], u0[:2])
    scaled = make_problem("allen_cahn", resolution=16, input_std=0.1).sample(0, 2)["latent"]
    assert np.allclose(scaled, u0[:2] * 0.1 / p.ac_reference_std())


def test_allen_cahn_restart_matches_single_integration():
    p = small("allen_cahn")
    d = p.sample(5, 2)
    full = p.solve_full(d["latent"])
    assert np.allclose(full[:, :AC_HISTORY], d["raw"])
    # the restart re-primes the two-step scheme, a first-order effect in one frame
    assert np.abs(p.solve(d["raw"]) - full[:, AC_HISTORY:]).max() < 1e-4
    resp = p.response(p.solve(d["raw"]), d["raw"])
    assert resp.shape == full.shape


def test_latent_limit_state_matches_solver():
    p = small("diffusion_reaction")
    z = np.array([[0.3, -1.2, 0.8], [0.0, 0.0, 0.0]])
    g = p.latent_limit_state(0.5)(z)
    f = trig_source_bank(special.ndtr(z), p.input_grid)
    expected = 0.5 - peak_response(p.solve(f), p.limit_state(0.5))
    assert np.allclose(g, expected)
    with pytest.raises(ValueError):
        small("nagumo").latent_limit_state()


def test_draw_streams_a_bank_in_chunks():
    p = small("darcy")
    seeds = sample_seeds(4, 6)
    whole = p.sample(4, 6)
    parts = [p.draw(seeds[i:i + 4])["raw"] for i in (0, 4)]
    assert np.array_equal(np.concatenate(parts), whole["raw"])
