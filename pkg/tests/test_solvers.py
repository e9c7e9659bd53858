"""Reference solvers: manufactured solutions, closed-form oracles and
structural properties."""
import numpy as np
import pytest

from piwno.solvers import (SolverConfig, allen_cahn_energy, calibrate_substeps, darcy_series_max,
                           solve_allen_cahn, solve_darcy, solve_diffusion_reaction, solve_nagumo)

B = K = 0.01


def dr_error(n):
    cfg = SolverConfig(nx=n, nt=5, substeps=100)

    def forcing(t, x):
        s = np.sin(np.pi * x)
        return s * (1 + B * np.pi ** 2 * t) - K * (t * s) ** 2

    u = solve_diffusion_reaction(np.zeros(n), cfg, forcing=forcing)[0]
    x, t = np.linspace(0, 1, n), np.linspace(0, 1, 5)
    return np.abs(u - np.sin(np.pi * x)[:, None] * t[None]).max()


def nagumo_error(n, eps=1.0, alpha=-0.5):
    cfg = SolverConfig(nx=n, nt=5, substeps=200)

    def forcing(t, x):
        u = np.exp(-t) * np.sin(np.pi * x)
        return -u + eps * np.pi ** 2 * u - u * (1 - u) * (u - alpha)

    x, t = np.linspace(0, 1, n), np.linspace(0, 1, 5)
    u = solve_nagumo(np.sin(np.pi * x), cfg, forcing=forcing)[0]
    return np.abs(u - np.exp(-t)[None] * np.sin(np.pi * x)[:, None]).max()


def darcy_error(n):
    x = np.linspace(0, 1, n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    a = 1 + X * Y
    u = np.sin(np.pi * X) * np.sin(np.pi * Y)
    f = a * 2 * np.pi ** 2 * u - np.pi * (Y * np.cos(np.pi * X) * np.sin(np.pi * Y)
                                          + X * np.sin(np.pi * X) * np.cos(np.pi * Y))
    return np.abs(solve_darcy(a, f) - u).max()


@pytest.mark.parametrize("error", [dr_error, nagumo_error, darcy_error])
def test_manufactured_spatial_order(error):
    e = np.array([error(n) for n in (17, 33, 65)])
    orders = np.log2(e[:-1] / e[1:])
    assert orders.min() >= 1.9


def test_darcy_series_oracle():
    # value of the Poisson torsion problem at the centre of the unit square
    assert darcy_series_max() == pytest.approx(0.0736713, abs=1e-6)
    assert darcy_series_max(399) == pytest.approx(darcy_series_max(199), abs=1e-7)
    u = solve_darcy(np.ones((65, 65)))
    assert u.max() == pytest.approx(darcy_series_max(), abs=1e-3)
    assert u[32, 32] == u.max()


def test_darcy_scaling_symmetry_and_validation(rng):
    a = np.exp(rng.standard_normal((33, 33)) * 0.3)
    u = solve_darcy(a)
    assert np.allclose(solve_darcy(4 * a), u / 4, atol=1e-12)
    # transposing the coefficient transposes the solution
    assert np.allclose(solve_darcy(a.T), u.T, atol=1e-12)
    batch = solve_darcy(np.stack([a, a.T]))
    assert np.allclose(batch[1], u.T, atol=1e-12)
    assert np.all(u[1:-1, 1:-1] > 0) and np.all(u[0] == 0)
    with pytest.raises(ValueError):
        solve_darcy(-a)
    with pytest.raises(ValueError):
        solve_darcy(np.ones((5, 6)))


def test_diffusion_reaction_trivial_and_batched(rng):
    cfg = SolverConfig(nx=41, nt=11, substeps=8)
    assert np.abs(solve_diffusion_reaction(np.zeros(41), cfg)).max() == 0
    f = rng.standard_normal((3, 41))
    batch = solve_diffusion_reaction(f, cfg)
    single = solve_diffusion_reaction(f[1], cfg)
    assert batch.shape == (3, 41, 11)
    assert np.allclose(batch[1], single[0], atol=1e-14)
    assert np.all(batch[:, [0, -1], :] == 0) and np.all(batch[:, :, 0] == 0)


def test_nagumo_fixed_points_and_decay():
    cfg = SolverConfig(nx=65, nt=5, substeps=64)
    assert np.abs(solve_nagumo(np.zeros(65), cfg)).max() == 0
    x = np.linspace(0, 1, 65)
    u = solve_nagumo(0.01 * np.sin(np.pi * x), cfg)[0]
    # small data follow the linearisation u_t = u_xx - alpha u, whose first
    # mode decays at rate pi^2 + alpha
    ratio = u[32, -1] / u[32, 0]
    assert ratio == pytest.approx(np.exp(-(np.pi ** 2 - 0.5)), rel=0.05)


def test_allen_cahn_uniform_state_matches_logistic_solution():
    cfg = SolverConfig(nx=8, substeps=64)
    u0 = np.full((8, 8), 0.2)
    frames = solve_allen_cahn(u0, n_frames=11, cfg=cfg)
    t = cfg.dt_frame * np.arange(11)
    exact = 0.2 * np.exp(t) / np.sqrt(1 - 0.04 + 0.04 * np.exp(2 * t))
    assert np.abs(frames[:, 0, 0] - exact).max() < 1e-5


def test_allen_cahn_energy_decay_and_maximum_principle(rng):
    u0 = 0.5 * rng.uniform(-1, 1, size=(2, 32, 32))
    frames = solve_allen_cahn(u0, n_frames=8, cfg=SolverConfig(nx=32, substeps=32))
    assert frames.shape == (2, 8, 32, 32)
    e = allen_cahn_energy(frames)
    assert np.all(np.diff(e, axis=1) <= 1e-12)
    assert np.abs(frames).max() <= 1.0 + 1e-9


def test_allen_cahn_second_order_in_time():
    x = np.arange(16) / 16
    u0 = 0.4 * np.sin(2 * np.pi * x)[:, None] * np.cos(2 * np.pi * x)[None, :]
    run = lambda s: solve_allen_cahn(u0, 3, SolverConfig(nx=16, substeps=s))  # noqa: E731
    ref = run(1024)
    e = [np.abs(run(s) - ref).max() for s in (8, 16, 32)]
    assert np.log2(e[0] / e[1]) > 1.8 and np.log2(e[1] / e[2]) > 1.8


def test_calibrate_substeps_on_a_known_sequence():
    # error halves per doubling: tolerance 1e-3 is first met between 2^9 and 2^10
    assert calibrate_substeps(lambda s: np.array([1.0 / s]), tol=1e-3) == 512
    with pytest.raises(RuntimeError):
        calibrate_substeps(lambda s: np.array([float(s)]), max_substeps=8)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(nx=2)
    with pytest.raises(ValueError):
        SolverConfig(t_end=0)
    with pytest.raises(ValueError):
        solve_allen_cahn(np.zeros((4, 4)), 2, SolverConfig(nx=4, stabilization=0.5))
