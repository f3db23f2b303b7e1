import numpy as np
import pytest
from scipy.linalg import solve_banded

import stoclaw as sc
import stoclaw.solver as solver_mod
from stoclaw.noise import JumpPath, LevyIntensity, PositionMeasure, SizeMeasure
from stoclaw.solver import (StepFailureError, Trajectory, grad_sq,
                            laplacian, norm_l2)


def silent_levy():
    return LevyIntensity(PositionMeasure("atom", mass=0.0),
                         SizeMeasure("atoms", atoms=((1.0, 0.0),)))


def atom_levy(mass=2.0):
    return LevyIntensity(PositionMeasure("atom", mass=mass),
                         SizeMeasure("atoms", atoms=((1.0, 1.0),)))


def make_spec(phi="zero", flux="zero", eps=0.0, eta=None, levy=None,
              u0=None, horizon=0.5, dim=1, flux_form="central",
              phi_scale=1.0, flux_scale=1.0):
    return sc.ProblemSpec(
        phi=sc.phi_family(phi, phi_scale),
        flux=sc.flux_family(flux, dim, flux_scale),
        eta=eta if eta is not None else sc.eta_family("zero"),
        u0=u0 if u0 is not None else sc.init_family("bump", height=0.5,
                                                    width=1.0, dim=dim),
        levy=levy if levy is not None else silent_levy(),
        epsilon=eps, horizon=horizon, dim=dim, flux_form=flux_form)


def empty_path(levy, horizon=0.5):
    return JumpPath(np.empty(0), np.empty(0), np.empty(0), 0, horizon, levy)


# ---------------------------------------------------------------------------
# Single steps

def test_identity_step():
    spec = make_spec()
    grid = sc.Grid(dim=1, half_width=2.0, cells=32)
    u = sc.discretize_initial(spec, grid)
    out = sc.implicit_step(spec, grid, u, np.zeros_like(u), 0.1)
    np.testing.assert_array_equal(out, u)


def test_constant_state_fixed_point():
    for flux_form in ("central", "engquist_osher"):
        spec = make_spec(phi="stefan", flux="burgers", eps=0.5,
                         flux_form=flux_form)
        grid = sc.Grid(dim=1, half_width=2.0, cells=32)
        u = np.full(grid.shape, 0.37)
        out = sc.implicit_step(spec, grid, u, np.zeros_like(u), 0.05)
        np.testing.assert_allclose(out, u, atol=1e-12)


def test_linear_step_matches_banded_oracle_dirichlet():
    # (I - dt eps lap)^(-1) against a direct banded solve, 100 random states
    eps, dt, m = 1.0, 0.1, 128
    spec = make_spec(eps=eps)
    grid = sc.Grid(dim=1, half_width=2.0, cells=m, bc="dirichlet")
    h2 = grid.h ** 2
    ab = np.zeros((3, m))
    ab[0, 1:] = -dt * eps / h2
    ab[1, :] = 1.0 + 2.0 * dt * eps / h2
    ab[1, 0] += dt * eps / h2   # odd-reflection ghost folds to the diagonal
    ab[1, -1] += dt * eps / h2
    ab[2, :-1] = -dt * eps / h2
    rng = np.random.default_rng(42)
    for _ in range(100):
        u = rng.uniform(-1, 1, m)
        ours = sc.implicit_step(spec, grid, u, np.zeros(m), dt)
        oracle = solve_banded((1, 1), ab, u)
        assert norm_l2(ours - oracle, grid) <= 1e-12


def test_linear_step_matches_periodic_oracle():
    eps, dt, m = 1.0, 0.1, 96
    spec = make_spec(eps=eps)
    grid = sc.Grid(dim=1, half_width=2.0, cells=m)
    h2 = grid.h ** 2
    mat = np.zeros((m, m))
    for i in range(m):
        mat[i, i] = 1.0 + 2.0 * dt * eps / h2
        mat[i, (i + 1) % m] = -dt * eps / h2
        mat[i, (i - 1) % m] = -dt * eps / h2
    rng = np.random.default_rng(7)
    for _ in range(20):
        u = rng.uniform(-1, 1, m)
        ours = sc.implicit_step(spec, grid, u, np.zeros(m), dt)
        oracle = np.linalg.solve(mat, u)
        assert norm_l2(ours - oracle, grid) <= 1e-12


def test_step_residual_within_tolerance():
    spec = make_spec(phi="stefan", flux="burgers", eps=0.05,
                     flux_form="engquist_osher")
    grid = sc.Grid(dim=1, half_width=2.0, cells=64)
    u = sc.discretize_initial(spec, grid)
    _, stats = sc.implicit_step(spec, grid, u, np.zeros_like(u), 0.02,
                                return_stats=True)
    assert stats.residual <= 1e-10 * (1.0 + norm_l2(u, grid))


def test_lemma_estimate_checked_when_applicable():
    # no flux: the one-step elliptic estimate is claimed and holds
    spec = make_spec(phi="porous", eps=0.1)
    grid = sc.Grid(dim=1, half_width=2.0, cells=64)
    u = sc.discretize_initial(spec, grid)
    _, stats = sc.implicit_step(spec, grid, u, 0.01 * np.ones_like(u), 0.05,
                                return_stats=True)
    assert stats.lemma_applicable
    assert stats.lemma_passed
    assert stats.lemma_ratio <= stats.lemma_bound


def test_step_failure_carries_history(monkeypatch):
    monkeypatch.setattr(solver_mod, "NEWTON_MAX_ITER", 1)
    monkeypatch.setattr(solver_mod, "PICARD_MAX_ITER", 1)
    spec = make_spec(phi="stefan", flux="burgers", eps=0.01,
                     u0=sc.init_family("bump", height=2.0, width=1.0))
    grid = sc.Grid(dim=1, half_width=2.0, cells=64)
    u = sc.discretize_initial(spec, grid)
    with pytest.raises(StepFailureError) as err:
        sc.implicit_step(spec, grid, u, np.zeros_like(u), 0.4)
    assert len(err.value.history) >= 2


def test_step_failure_propagates_step_index(monkeypatch):
    monkeypatch.setattr(solver_mod, "NEWTON_MAX_ITER", 1)
    monkeypatch.setattr(solver_mod, "PICARD_MAX_ITER", 1)
    spec = make_spec(phi="stefan", flux="burgers", eps=0.01,
                     u0=sc.init_family("bump", height=2.0, width=1.0),
                     horizon=2.0)
    grid = sc.Grid(dim=1, half_width=2.0, cells=64)
    with pytest.raises(StepFailureError, match="step 1 of 4"):
        sc.solve_path(spec, grid, 4, empty_path(silent_levy(), 2.0))


# ---------------------------------------------------------------------------
# Whole paths

def test_mass_conservation_periodic():
    spec = make_spec(phi="porous", eps=0.2)
    grid = sc.Grid(dim=1, half_width=2.0, cells=64)
    traj = sc.solve_path(spec, grid, 16, empty_path(silent_levy()))
    masses = [float(np.sum(traj.fields[k])) * grid.cell_volume
              for k in range(17)]
    np.testing.assert_allclose(masses, masses[0], atol=1e-12)


def test_self_refinement_convergence():
    # smooth viscous profile: errors against a 10x finer reference shrink
    # roughly first order in dt on a fixed grid
    spec = make_spec(phi="linear", phi_scale=0.2, flux="burgers", eps=0.1,
                     flux_scale=0.5)
    grid = sc.Grid(dim=1, half_width=2.0, cells=128)
    path = empty_path(silent_levy())
    ref = sc.solve_path(spec, grid, 160, path)
    errs = []
    for n in (8, 16, 32):
        traj = sc.solve_path(spec, grid, n, path)
        errs.append(norm_l2(traj.fields[-1] - ref.fields[-1], grid))
    errs = np.asarray(errs)
    assert np.all(errs[1:] <= 0.65 * errs[:-1])


def test_bitwise_determinism():
    levy = atom_levy()
    eta = sc.eta_family("separable", g_kind="const", g_height=0.5,
                        sigma_kind="compact", sigma_scale=0.5, sigma_cap=1.0)
    spec = make_spec(phi="stefan", flux="burgers", eps=0.05, eta=eta,
                     levy=levy, flux_form="engquist_osher")
    grid = sc.Grid(dim=1, half_width=2.0, cells=64)
    path = sc.sample_jump_path(levy, 0.5, 33)
    t1 = sc.solve_path(spec, grid, 16, path)
    t2 = sc.solve_path(spec, grid, 16, path)
    assert np.array_equal(t1.fields, t2.fields)
    assert np.array_equal(t1.increments, t2.increments)


def test_comparison_monotonicity_smoke():
    # ordered initial states stay ordered for the monotone form
    spec = make_spec(phi="stefan", flux="burgers", eps=0.1,
                     flux_form="engquist_osher")
    grid = sc.Grid(dim=1, half_width=2.0, cells=64)
    lo = sc.discretize_initial(
        spec.with_u0(sc.init_family("bump", height=0.3, width=1.0)), grid)
    hi = sc.discretize_initial(
        spec.with_u0(sc.init_family("bump", height=0.6, width=1.2)), grid)
    path = empty_path(silent_levy())
    t_lo = sc.solve_path(spec, grid, 16, path, u0_field=lo)
    t_hi = sc.solve_path(spec, grid, 16, path, u0_field=hi)
    assert np.all(t_lo.fields <= t_hi.fields + 1e-8)


def test_2d_solver_smoke():
    spec = make_spec(phi="porous", flux="burgers", eps=0.05, dim=2,
                     flux_form="engquist_osher",
                     u0=sc.init_family("bump", height=0.5, width=0.8, dim=2),
                     horizon=0.25)
    grid = sc.Grid(dim=2, half_width=2.0, cells=64)
    traj = sc.solve_path(spec, grid, 8, empty_path(silent_levy(), 0.25))
    assert traj.fields.shape == (9, 64, 64)
    assert max(s.residual for s in traj.stats) <= 1e-9
    masses = [float(np.sum(traj.fields[k])) * grid.cell_volume for k in (0, 8)]
    np.testing.assert_allclose(masses[0], masses[1], atol=1e-10)


# ---------------------------------------------------------------------------
# Interpolants

def test_interpolants_constant_trajectory():
    spec = make_spec(eps=0.1)
    grid = sc.Grid(dim=1, half_width=1.0, cells=8)
    fields = np.ones((5, 8)) * 0.4
    traj = Trajectory(fields=fields, increments=np.zeros((4, 8)), dt=0.125,
                      grid=grid, spec=spec, stats=[])
    interp = sc.build_interpolants(traj)
    assert interp.gap_sq == 0.0
    for t in (0.0, 0.1, 0.3, 0.49):
        np.testing.assert_array_equal(interp.piecewise(t), fields[0])
        np.testing.assert_array_equal(interp.linear(t), fields[0])


def test_interpolant_gap_closed_form():
    # u0 = 0, u1 = 1 with unit discrete mass: gap integral dt / 3
    spec = make_spec()
    grid = sc.Grid(dim=1, half_width=0.5, cells=4)  # h = 0.25, 4 cells
    dt = 0.2
    fields = np.stack([np.zeros(4), np.ones(4)])
    traj = Trajectory(fields=fields, increments=np.zeros((1, 4)), dt=dt,
                      grid=grid, spec=spec, stats=[])
    interp = sc.build_interpolants(traj)
    np.testing.assert_allclose(interp.gap_sq, dt / 3.0, atol=1e-15)
    assert interp.gap_sq <= interp.gap_bound + 1e-15


def test_interpolants_knot_exactness():
    levy = atom_levy()
    eta = sc.eta_family("separable", g_kind="const", g_height=0.5,
                        sigma_kind="const", sigma_scale=1.0)
    spec = make_spec(phi="linear", eps=0.1, eta=eta, levy=levy)
    grid = sc.Grid(dim=1, half_width=2.0, cells=32)
    path = sc.sample_jump_path(levy, 0.5, 3)
    traj = sc.solve_path(spec, grid, 8, path)
    interp = sc.build_interpolants(traj)
    b = np.concatenate([np.zeros((1,) + grid.shape),
                        np.cumsum(traj.increments, axis=0)])
    for k in range(9):
        t = k * traj.dt
        np.testing.assert_allclose(interp.linear(t), traj.fields[k],
                                   atol=1e-14)
        np.testing.assert_allclose(interp.noise_accumulator(t), b[k],
                                   atol=1e-14)
    # piecewise-constant convention: u_k on [(k-1) dt, k dt), u_0 before 0
    np.testing.assert_array_equal(interp.piecewise(-0.1), traj.fields[0])
    np.testing.assert_array_equal(interp.piecewise(0.5 * traj.dt),
                                  traj.fields[1])


# ---------------------------------------------------------------------------
# Energy bookkeeping

def test_energy_zero_data():
    spec = make_spec(phi="linear", eps=0.1,
                     u0=sc.init_family("zero"))
    grid = sc.Grid(dim=1, half_width=2.0, cells=32)
    traj = sc.solve_path(spec, grid, 8, empty_path(silent_levy()))
    rep = sc.discrete_energy_report(traj)
    assert rep.final_energy == 0.0
    assert rep.monotone


def test_energy_noiseless_monotone():
    spec = make_spec(phi="stefan", flux="burgers", eps=0.1,
                     flux_form="engquist_osher")
    grid = sc.Grid(dim=1, half_width=2.0, cells=64)
    traj = sc.solve_path(spec, grid, 16, empty_path(silent_levy()))
    rep = sc.discrete_energy_report(traj)
    assert rep.monotone
    assert np.all(np.diff(rep.u_norm_sq) <= 1e-12)


def test_energy_gronwall_terms():
    levy = atom_levy()
    eta = sc.eta_family("separable", g_kind="const", g_height=1.0,
                        sigma_kind="compact", sigma_scale=0.8, sigma_cap=1.0)
    spec = make_spec(phi="stefan", flux="burgers", eps=0.05, eta=eta,
                     levy=levy, flux_form="engquist_osher")
    grid = sc.Grid(dim=1, half_width=2.0, cells=64)
    path = sc.sample_jump_path(levy, 0.5, 17)
    traj = sc.solve_path(spec, grid, 16, path)
    rep = sc.discrete_energy_report(traj, kirchhoff_fn=sc.kirchhoff(spec.phi))
    assert rep.passed
    assert rep.grad_g_sq is not None and np.all(rep.grad_g_sq >= 0)
    # the fitted envelope really covers every partial sum
    for n in range(1, 17):
        lhs = rep.energy(n)
        envelope = rep.gronwall_c1 + rep.gronwall_c2 * traj.dt * float(
            np.sum(rep.u_norm_sq[:n]))
        assert lhs <= envelope * (1 + 1e-9) + 1e-12


def test_viscous_energy_bound_uniform_in_epsilon():
    # sup_n ||u_n||^2 + eps dt sum ||grad u_n||^2 + dt sum ||grad G(u_n)||^2
    # stays bounded as eps is reduced
    levy = atom_levy()
    eta = sc.eta_family("separable", g_kind="const", g_height=1.0,
                        sigma_kind="compact", sigma_scale=0.8, sigma_cap=1.0)
    totals = []
    for eps in (0.1, 0.05, 0.025):
        spec = make_spec(phi="stefan", flux="burgers", eps=eps, eta=eta,
                         levy=levy, flux_form="engquist_osher")
        grid = sc.Grid(dim=1, half_width=2.0, cells=64)
        acc = 0.0
        for seed in range(10):
            path = sc.sample_jump_path(levy, 0.5, seed)
            traj = sc.solve_path(spec, grid, 16, path)
            rep = sc.discrete_energy_report(
                traj, kirchhoff_fn=sc.kirchhoff(spec.phi))
            acc += (float(np.max(rep.u_norm_sq))
                    + eps * traj.dt * float(np.sum(rep.grad_u_sq))
                    + traj.dt * float(np.sum(rep.grad_g_sq[1:])))
        totals.append(acc / 10.0)
    assert max(totals) <= 2.0 * min(totals) + 1e-9


def test_initial_condition_time_average():
    # (1/tau) int_0^tau int |u - u0| psi shrinks as tau -> 0 (noiseless)
    spec = make_spec(phi="porous", flux="burgers", eps=0.1,
                     flux_form="engquist_osher")
    grid = sc.Grid(dim=1, half_width=2.0, cells=128)
    traj = sc.solve_path(spec, grid, 64, empty_path(silent_levy()))
    interp = sc.build_interpolants(traj)
    u0 = traj.fields[0]
    psi = np.maximum(1.0 - (grid.coords()[..., 0] / 1.5) ** 2, 0.0) ** 2
    vals = []
    for frac in (16, 32, 64):
        tau = spec.horizon / frac
        steps = max(1, int(round(tau / traj.dt)))
        acc = 0.0
        for k in range(1, steps + 1):
            acc += traj.dt * float(
                np.sum(np.abs(traj.fields[k] - u0) * psi)) * grid.cell_volume
        vals.append(acc / tau)
    assert vals[2] < vals[1] < vals[0]


def test_grad_sq_matches_summation_by_parts():
    rng = np.random.default_rng(0)
    for bc in ("periodic", "dirichlet"):
        grid = sc.Grid(dim=1, half_width=1.0, cells=32, bc=bc)
        u = rng.uniform(-1, 1, 32)
        lhs = -float(np.sum(laplacian(u, grid) * u)) * grid.cell_volume
        np.testing.assert_allclose(lhs, grad_sq(u, grid), atol=1e-12)
