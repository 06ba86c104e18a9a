import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meanfield.errors import BootstrapFailure, NumericalFailure
from meanfield.grid import ComplexField, field_from_function, make_grid, norm
from meanfield.onebody import (
    BoundaryMassWarning,
    Cubic,
    Hartree,
    OneBodyProblem,
    SplitStepper,
    WaveTrajectory,
    bootstrap_root,
    energy,
    evolve,
    linear_decay_probe,
    M_functional,
    measure_decay,
    measure_time_derivative_decay,
    scaled_hartree,
    step,
)
from meanfield.potentials import InteractionSpec, PotentialSpec, sample_interaction, sample_potential

from conftest import free_gaussian_exact, gaussian


def plane_wave(grid, m):
    return field_from_function(grid, lambda x: np.exp(2j * np.pi * m * x / grid.box_length) / np.sqrt(grid.box_length))


def nls_problem(grid, lam=1.0):
    V = sample_potential(PotentialSpec("gaussian_bump", 0.5, 1.0), grid)
    return OneBodyProblem(grid, gaussian(grid, 1.0), V, Cubic(1.0), lam)


def hartree_problem(grid, lam=0.5):
    V = sample_potential(PotentialSpec("gaussian_bump", 0.5, 1.0), grid)
    w = sample_interaction(InteractionSpec("gaussian", 1.0, 1.0), grid)
    return OneBodyProblem(grid, gaussian(grid, 1.0), V, Hartree(w), lam)


class TestProblem:
    def test_rejects_unnormalized(self, grid1d):
        with pytest.raises(ValueError, match="unit"):
            OneBodyProblem(grid1d, gaussian(grid1d).with_values(2 * gaussian(grid1d).values))

    def test_rejects_complex_potential(self, grid1d):
        V = ComplexField(grid1d, 1j * np.ones(grid1d.shape))
        with pytest.raises(ValueError, match="real"):
            OneBodyProblem(grid1d, gaussian(grid1d), V)

    def test_rejects_zero_dt(self, grid1d):
        with pytest.raises(ValueError):
            SplitStepper(OneBodyProblem(grid1d, gaussian(grid1d)), 0.0)


class TestStep:
    def test_plane_wave_picks_up_kinetic_phase(self):
        g = make_grid(1, 64, 8.0)
        u = plane_wave(g, 3)
        out = step(OneBodyProblem(g, u), u, 0.1)
        expect = u.values * np.exp(-1j * 0.1 * 4 * np.pi**2 * (3 / 8.0) ** 2)
        np.testing.assert_allclose(out.values, expect, atol=1e-13)

    def test_plane_wave_with_cubic_term(self):
        g = make_grid(1, 64, 8.0)
        u = plane_wave(g, 2)
        out = step(OneBodyProblem(g, u, None, Cubic(3.0), 0.5), u, 0.1)
        phase = 4 * np.pi**2 * (2 / 8.0) ** 2 + 0.5 * 3.0 / 8.0
        np.testing.assert_allclose(out.values, u.values * np.exp(-1j * 0.1 * phase), atol=1e-13)

    def test_free_gaussian_matches_closed_form(self):
        g = make_grid(1, 1024, 256.0)
        problem = OneBodyProblem(g, gaussian(g, 1.0))
        traj = evolve(problem, 10.0, 0.1, snapshot_times=[1.0, 10.0])
        for t in (1.0, 10.0):
            err = np.max(np.abs(traj.snapshot_at(t).values - free_gaussian_exact(g, 1.0, t).values))
            assert err < 1e-6

    def test_local_error_is_third_order(self):
        g = make_grid(1, 256, 32.0)
        problem = nls_problem(g)
        u0 = problem.u0

        def local_error(dt):
            ref = u0
            for _ in range(64):
                ref = step(problem, ref, dt / 64)
            return np.max(np.abs(step(problem, u0, dt).values - ref.values))

        order = np.log2(local_error(0.04) / local_error(0.02))
        assert order >= 2.7

    def test_global_convergence_is_second_order(self):
        g = make_grid(1, 256, 32.0)
        problem = nls_problem(g)
        ref = evolve(problem, 1.0, 1e-3 / 2).snapshots[-1].values
        dts = [0.04, 0.02, 0.01]
        errs = [np.max(np.abs(evolve(problem, 1.0, dt).snapshots[-1].values - ref)) for dt in dts]
        p = np.polyfit(np.log(dts), np.log(errs), 1)[0]
        assert 1.8 <= p <= 2.2

    def test_time_reversal(self):
        g = make_grid(1, 256, 32.0)
        problem = hartree_problem(g)
        u = problem.u0
        fwd, back = SplitStepper(problem, 0.01), SplitStepper(problem, -0.01)
        v = u.values
        for _ in range(200):
            v = fwd(v)
        for _ in range(200):
            v = back(v)
        assert np.max(np.abs(v - u.values)) < 1e-8

    def test_gauge_covariance(self):
        g = make_grid(1, 256, 32.0)
        problem = nls_problem(g)
        theta = 0.7
        rotated = OneBodyProblem(g, problem.u0.with_values(np.exp(1j * theta) * problem.u0.values),
                                 problem.V, problem.nonlinearity, problem.lam)
        a = evolve(problem, 1.0, 0.01).snapshots[-1].values
        b = evolve(rotated, 1.0, 0.01).snapshots[-1].values
        np.testing.assert_allclose(b, np.exp(1j * theta) * a, atol=1e-12)

    def test_blowup_guard(self, grid1d):
        stepper = SplitStepper(OneBodyProblem(grid1d, gaussian(grid1d)), 0.01)
        stepper.linf_limit = 1e-3
        with pytest.raises(NumericalFailure):
            stepper(gaussian(grid1d).values)


class TestInvariants:
    @pytest.mark.parametrize("make", [nls_problem, hartree_problem])
    def test_mass_and_energy(self, make):
        g = make_grid(1, 512, 64.0)
        traj = evolve(make(g), 2.0, 1e-3)
        obs = traj.observables
        assert np.max(np.abs(obs.l2 - 1.0)) < 1e-10
        assert np.max(np.abs(obs.energy - obs.energy[0])) / abs(obs.energy[0]) < 1e-4

    def test_energy_drift_scales_with_dt_squared(self):
        g = make_grid(1, 256, 32.0)
        problem = nls_problem(g, lam=2.0)
        drift = []
        for dt in (0.02, 0.01):
            e = evolve(problem, 1.0, dt).observables.energy
            drift.append(np.max(np.abs(e - e[0])))
        assert 3.0 < drift[0] / drift[1] < 5.0

    @pytest.mark.filterwarnings("ignore::meanfield.onebody.BoundaryMassWarning")
    @settings(max_examples=10, deadline=None)
    @given(st.floats(-2.0, 2.0), st.floats(0.3, 2.0))
    def test_mass_conserved_for_random_couplings(self, lam, width):
        g = make_grid(1, 128, 32.0)
        problem = OneBodyProblem(g, gaussian(g, width), None, Cubic(1.0), lam)
        assert abs(norm(evolve(problem, 0.5, 0.01).snapshots[-1]) - 1.0) < 1e-12


class TestNonlinearities:
    def test_hartree_approaches_cubic_as_kernel_narrows(self):
        g = make_grid(1, 1024, 32.0)
        u0 = gaussian(g, 1.0)
        ref = evolve(OneBodyProblem(g, u0, None, Cubic(1.0), 1.0), 1.0, 1e-2).snapshots[-1].values
        errs = []
        for s in (0.2, 0.1, 0.05):
            w = sample_interaction(InteractionSpec("delta_limit", 1.0, s), g)
            u = evolve(OneBodyProblem(g, u0, None, Hartree(w), 1.0), 1.0, 1e-2).snapshots[-1].values
            errs.append(np.max(np.abs(u - ref)))
        assert errs[0] > errs[1] > errs[2]
        assert errs[-1] < 5e-3

    def test_scaled_hartree_with_n_one_is_plain_hartree(self):
        g = make_grid(1, 128, 16.0)
        spec = InteractionSpec("gaussian", 1.0, 1.0)
        a = scaled_hartree(spec, 1, 0.2, g).w.values
        np.testing.assert_array_equal(a, sample_interaction(spec, g).values)


class TestEnergy:
    def test_plane_wave(self):
        g = make_grid(1, 64, 8.0)
        u = plane_wave(g, 3)
        assert energy(OneBodyProblem(g, u), u) == pytest.approx(4 * np.pi**2 * (3 / 8) ** 2, rel=1e-12)

    def test_constant_state_with_cubic(self):
        g = make_grid(2, 16, 4.0)
        u = ComplexField(g, np.full(g.shape, 0.25 + 0j))
        # |u|^2 = 1/16, int (a/2) lam |u|^4 = 0.5 * 2 * 3 * 16 / 256
        assert energy(OneBodyProblem(g, u, None, Cubic(3.0), 2.0), u) == pytest.approx(3.0 / 16, rel=1e-12)

    def test_gaussian_with_potential_matches_quadrature(self):
        g = make_grid(1, 512, 32.0)
        x = g.axis
        width, a, lam = 1.3, 0.8, 0.6
        amp = (np.pi * width**2) ** -0.25
        u = amp * np.exp(-(x**2) / (2 * width**2))
        du = -x / width**2 * u
        Vx = 0.5 * np.exp(-((x - 1.0) ** 2) / 2)
        h = g.spacing
        expect = np.sum(du**2) * h + np.sum(Vx * u**2) * h + 0.5 * lam * a * np.sum(u**4) * h
        V = sample_potential(PotentialSpec("gaussian_bump", 0.5, 1.0, (1.0,)), g)
        field = ComplexField(g, u)
        got = energy(OneBodyProblem(g, field, V, Cubic(a), lam), field)
        assert got == pytest.approx(expect, rel=1e-10)
        # analytic check of the kinetic part: int |u'|^2 = 1/(2 width^2)
        assert np.sum(du**2) * h == pytest.approx(0.5 / width**2, rel=1e-10)


class TestEvolve:
    def test_zero_time_returns_initial_state(self, grid1d):
        problem = OneBodyProblem(grid1d, gaussian(grid1d))
        traj = evolve(problem, 0.0, 0.01)
        assert traj.times == [0.0]
        np.testing.assert_array_equal(traj.snapshots[0].values, problem.u0.values)

    def test_dt_adjusted_to_land_on_t_max(self, grid1d):
        traj = evolve(OneBodyProblem(grid1d, gaussian(grid1d)), 1.0, 0.3)
        assert traj.dt == pytest.approx(0.25)
        assert traj.times[-1] == pytest.approx(1.0)

    def test_boundary_mass_warning(self):
        g = make_grid(1, 256, 32.0)
        with pytest.warns(BoundaryMassWarning):
            evolve(OneBodyProblem(g, gaussian(g, 1.0, center=14.0)), 0.1, 0.05)

    def test_observables_csv(self, tmp_path, grid1d):
        traj = evolve(OneBodyProblem(grid1d, gaussian(grid1d)), 0.1, 0.05)
        traj.observables.to_csv(tmp_path / "obs.csv")
        lines = (tmp_path / "obs.csv").read_text().splitlines()
        assert lines[0] == "t,l2,linf,energy,boundary_mass"
        assert len(lines) == 4


class TestDecayMeasurements:
    def test_free_gaussian_weighted_sup_tends_to_limit(self):
        g = make_grid(1, 4096, 2048.0)
        width = 2.0
        traj = evolve(OneBodyProblem(g, gaussian(g, width)), 200.0, 1.0)
        pairs, sup = measure_decay(traj, 0.5)
        amp = (np.pi * width**2) ** -0.25
        for t, val in pairs:
            exact = (1 + t) ** 0.5 * amp * width / (width**4 + 4 * t**2) ** 0.25
            assert val == pytest.approx(exact, rel=1e-6)
        assert pairs[-1][1] == pytest.approx(amp * width / np.sqrt(2), rel=0.01)
        assert all(b >= a for a, b in zip(sup, sup[1:]))

    def test_rejects_negative_exponent(self, grid1d):
        traj = evolve(OneBodyProblem(grid1d, gaussian(grid1d)), 0.1, 0.05)
        with pytest.raises(ValueError):
            measure_decay(traj, -0.5)

    @pytest.mark.filterwarnings("ignore::meanfield.onebody.BoundaryMassWarning")
    def test_derivative_of_plane_wave_eigenstate(self):
        g = make_grid(1, 64, 8.0)
        u = plane_wave(g, 2)
        E = 4 * np.pi**2 * (2 / 8) ** 2
        delta = 0.01
        traj = evolve(OneBodyProblem(g, u), 4 * delta, delta, snapshot_times=[k * delta for k in range(5)])
        est = measure_time_derivative_decay(traj, 0.0)
        for _, val in est:
            assert val == pytest.approx(np.sin(E * delta) / delta / np.sqrt(8.0), rel=1e-10)
            assert val == pytest.approx(E / np.sqrt(8.0), rel=(E * delta) ** 2)

    def test_derivative_of_free_gaussian(self):
        # d_t u = i u_xx; compare against the closed-form second derivative.
        g = make_grid(1, 1024, 256.0)
        delta = 0.01
        times = [1.0 + k * delta for k in range(-1, 2)]
        traj = evolve(OneBodyProblem(g, gaussian(g, 1.0)), times[-1], delta / 10, snapshot_times=times)
        (t, val), = measure_time_derivative_decay(traj, 0.5)
        s = 1.0 + 2j * t
        x = g.axis
        u = free_gaussian_exact(g, 1.0, t).values
        exact = np.max(np.abs((x**2 / s**2 - 1 / s) * u))
        assert val == pytest.approx((1 + t) ** 0.5 * exact, rel=1e-3)

    def test_requires_uniform_snapshots(self, grid1d):
        snaps = [gaussian(grid1d)] * 3
        with pytest.raises(ValueError):
            measure_time_derivative_decay(WaveTrajectory([0.0, 1.0, 3.0], snaps), 0.5)
        with pytest.raises(ValueError):
            measure_time_derivative_decay(WaveTrajectory([0.0, 1.0], snaps[:2]), 0.5)


class TestLinearDecayProbe:
    def test_free_ratio_matches_closed_form_and_limit(self):
        g = make_grid(1, 8192, 4096.0)
        width = 1.0
        f = gaussian(g, width)
        pairs, C = linear_decay_probe(None, f, [1, 10, 100])
        amp = (np.pi * width**2) ** -0.25
        l1 = amp * width * np.sqrt(2 * np.pi)
        for t, r in pairs:
            exact = amp * width * (width**4 + 4 * t**2) ** -0.25 * t**0.5 / l1
            assert r == pytest.approx(exact, rel=1e-8)
        assert pairs[-1][1] == pytest.approx((4 * np.pi) ** -0.5, rel=1e-4)
        assert C == max(r for _, r in pairs)

    def test_bound_state_breaks_dispersive_bound(self):
        # -d^2 - 2 sech^2 has the bound state sech(x)/sqrt(2) with energy -1.
        g = make_grid(1, 512, 256.0)
        V = sample_potential(PotentialSpec("sech_squared_well", -2.0, 1.0), g)
        f = gaussian(g, 1.0)
        phi = 1 / np.cosh(g.axis) / np.sqrt(2)
        proj = abs(np.sum(phi * f.values) * g.spacing)
        predicted = proj * np.max(phi) / norm(f, "L1")
        pairs, _ = linear_decay_probe(V, f, [10, 20, 40, 80])
        ratios = [r for _, r in pairs]
        assert all(b > a for a, b in zip(ratios, ratios[1:]))
        for t, r in pairs:
            assert r / np.sqrt(t) == pytest.approx(predicted, rel=0.02)

    def test_repulsive_bump_keeps_ratio_bounded(self):
        g = make_grid(1, 2048, 1024.0)
        V = sample_potential(PotentialSpec("gaussian_bump", 0.5, 1.0), g)
        pairs, C = linear_decay_probe(V, gaussian(g, 1.0), [5, 20, 80])
        assert C < 2 * (4 * np.pi) ** -0.5

    def test_rejects_nonpositive_times(self, grid1d):
        with pytest.raises(ValueError):
            linear_decay_probe(None, gaussian(grid1d), [0.0, 1.0])


class TestBootstrap:
    def test_reference_root(self):
        assert bootstrap_root(0.1, 8.0) == pytest.approx(0.110916, abs=1e-6)

    def test_zero_eps(self):
        assert bootstrap_root(0.0, 8.0) == 0.0

    def test_failure_past_discriminant(self):
        with pytest.raises(BootstrapFailure):
            bootstrap_root(0.2, 8.0)
        # exactly at the double root 27 C eps^2 = 4
        with pytest.raises(BootstrapFailure):
            bootstrap_root(np.sqrt(4 / 27), 1.0)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(1e-6, 10.0), st.floats(0.01, 0.999))
    def test_matches_polynomial_roots(self, C, frac):
        eps = frac * np.sqrt(4 / (27 * C))
        roots = np.roots([C, 0.0, -1.0, eps])
        real = roots[np.abs(roots.imag) < 1e-9].real
        expect = np.min(real[real >= 0])
        got = bootstrap_root(eps, C)
        assert got == pytest.approx(expect, rel=1e-8, abs=1e-12)
        assert eps <= got <= 1 / np.sqrt(3 * C)


class TestMFunctional:
    def test_initial_value_closed_form(self):
        g = make_grid(1, 512, 40.0)
        traj = WaveTrajectory([0.0], [gaussian(g, 1.0)])
        # pi^{-1/4} + ||u''||_2 + 1 with ||u''||_2^2 = 3/4
        assert M_functional(traj) == pytest.approx(np.pi**-0.25 + np.sqrt(0.75) + 1.0, rel=1e-8)

    def test_nondecreasing_in_T(self):
        g = make_grid(1, 256, 64.0)
        traj = evolve(nls_problem(g, lam=-1.0), 2.0, 0.01, snapshot_times=np.linspace(0, 2, 5))
        values = [M_functional(traj, T=T) for T in (0.0, 0.5, 1.0, 2.0)]
        assert all(b >= a - 1e-14 for a, b in zip(values, values[1:]))
        assert values[0] >= 1.0
