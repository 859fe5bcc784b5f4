import numpy as np
import pytest

from stopsim import (
    BlowupError,
    GridMismatchError,
    HysteresisConfig,
    InvalidConfigError,
    NonContractionError,
    NonsmoothPointError,
    ReactionFunction,
    SolverConfig,
    StopCursor,
    boundedness_report,
    evaluate_S,
    picard_slice_iterate,
    quad_norm,
    solve_state,
)

from conftest import constant_sfun
from oracles import generator_dense_1d, imex_reference_1d, quad_weights_1d


def zero_source(disc, solver):
    return np.zeros((solver.n_steps + 1, disc.n_components, disc.n_nodes))


def sine_source(disc, solver, amplitude=2.0, omega=4.0):
    x = disc.coords[:, 0]
    profile = np.sin(np.pi * x)
    t = solver.times()
    u = amplitude * np.sin(omega * t)[:, None, None] * profile[None, None, :]
    return u


class TestReactionCatalog:
    def test_linear_value_and_derivative(self):
        f = ReactionFunction.linear(0.3, -0.5, 0.8)
        y = np.array([0.0, 1.0, -2.0])
        np.testing.assert_allclose(f.value(y, 0.5),
                                   0.3 - 0.5 * y + 0.8 * 0.5, rtol=1e-15)
        np.testing.assert_allclose(f.directional(y, 0.5, y, -1.0),
                                   -0.5 * y - 0.8, rtol=1e-15)
        assert f.derivative_is_exact

    def test_saturating_value_and_directional_vs_quotient(self):
        f = ReactionFunction.saturating(-0.7, 1.1, 0.8, 0.9)
        rng = np.random.default_rng(30)
        y = rng.uniform(-2, 2, 50)
        z, dy, dz = 0.4, rng.uniform(-1, 1, 50), -0.6
        np.testing.assert_allclose(
            f.value(y, z),
            -0.7 * np.tanh(1.1 * y) + 0.8 * np.tanh(0.9 * z), rtol=1e-15)
        eps = 1e-6
        quot = (f.value(y + eps * dy, z + eps * dz)
                - f.value(y - eps * dy, z - eps * dz)) / (2 * eps)
        np.testing.assert_allclose(f.directional(y, z, dy, dz), quot,
                                   rtol=1e-6, atol=1e-9)

    def test_logistic_capped_value_matches_clip(self):
        f = ReactionFunction.logistic_capped(4.0, 2.0, 1.5, 0.6)
        rng = np.random.default_rng(31)
        y = rng.uniform(-1, 3, 100)
        inner = 4.0 * y * (1.0 - y / 2.0)
        np.testing.assert_allclose(f.value(y, 0.25),
                                   np.clip(inner, -1.5, 1.5) + 0.6 * 0.25,
                                   rtol=1e-14)

    def test_logistic_capped_one_sided_at_the_cap(self):
        # at y = 0.5 the uncapped value is exactly 1.5 = cap and its slope
        # along +y is 2, so the one-sided rule keeps only the inward move
        f = ReactionFunction.logistic_capped(4.0, 2.0, 1.5, 0.6)
        y = np.array([0.5])
        up = f.directional(y, 0.0, np.array([1.0]), 0.0)
        down = f.directional(y, 0.0, np.array([-1.0]), 0.0)
        np.testing.assert_array_equal(up, [0.0])
        np.testing.assert_array_equal(down, [-2.0])
        with_z = f.directional(y, 0.0, np.array([1.0]), 2.0)
        np.testing.assert_allclose(with_z, [0.6 * 2.0], rtol=1e-15)

    def test_table_reproduces_affine_data(self):
        yg = np.linspace(-2.0, 2.0, 5)
        zg = np.linspace(-1.0, 1.0, 3)
        vals = 2.0 * yg[:, None] - zg[None, :] + 3.0
        f = ReactionFunction.from_table(yg, zg, vals)
        assert not f.derivative_is_exact
        rng = np.random.default_rng(32)
        y = rng.uniform(-1.9, 1.9, 40)
        z = 0.37
        np.testing.assert_allclose(f.value(y, z), 2.0 * y - z + 3.0,
                                   rtol=1e-12)
        d = f.directional(y, z, np.ones_like(y), -1.0)
        np.testing.assert_allclose(d, np.full_like(y, 3.0), atol=1e-8)

    def test_table_rejects_probes_outside_domain(self):
        yg = np.linspace(-1.0, 1.0, 3)
        zg = np.linspace(-1.0, 1.0, 3)
        f = ReactionFunction.from_table(yg, zg, np.zeros((3, 3)))
        with pytest.raises(NonsmoothPointError):
            f.value(np.array([1.5]), 0.0)
        with pytest.raises(NonsmoothPointError):
            f.directional(np.array([1.0 - 1e-9]), 0.0, np.array([1.0]), 0.0)

    def test_growth_probe_rejects_false_declarations(self):
        with pytest.raises(InvalidConfigError):
            ReactionFunction.linear(0.0, 0.5, 0.3, growth_constant=0.001)

    def test_construction_validation(self):
        with pytest.raises(InvalidConfigError):
            ReactionFunction("weird", (1.0,))
        with pytest.raises(InvalidConfigError):
            ReactionFunction("linear", (1.0,))
        with pytest.raises(InvalidConfigError):
            ReactionFunction.logistic_capped(1.0, -2.0, 1.0, 0.0)
        with pytest.raises(InvalidConfigError):
            ReactionFunction.from_table([0.0, 1.0], [0.0, 1.0],
                                        [[0.0, 1.0]])
        with pytest.raises(InvalidConfigError):
            ReactionFunction.from_table([0.0, 0.0], [0.0, 1.0],
                                        np.zeros((2, 2)))


class TestSolverConfig:
    def test_step_counts_and_times(self):
        solver = SolverConfig(dt=0.25, t_final=2.0)
        assert solver.n_steps == 8
        assert solver.slice_steps == 8
        np.testing.assert_allclose(solver.times(), 0.25 * np.arange(9),
                                   rtol=1e-15)
        sliced = SolverConfig(dt=0.25, t_final=2.0, scheme="picard-sliced",
                              slice_length=0.75)
        assert sliced.slice_steps == 3

    def test_validation(self):
        with pytest.raises(InvalidConfigError):
            SolverConfig(dt=0.1, t_final=1.0, scheme="rk4")
        with pytest.raises(InvalidConfigError):
            SolverConfig(dt=0.0, t_final=1.0)
        with pytest.raises(InvalidConfigError):
            SolverConfig(dt=0.3, t_final=0.2)
        with pytest.raises(InvalidConfigError):
            SolverConfig(dt=0.3, t_final=1.0)
        with pytest.raises(InvalidConfigError):
            SolverConfig(dt=0.1, t_final=1.0, slice_length=0.25)
        with pytest.raises(InvalidConfigError):
            SolverConfig(dt=0.1, t_final=1.0, picard_tol=0.0)
        with pytest.raises(InvalidConfigError):
            SolverConfig(dt=0.1, t_final=1.0, picard_max_iters=0)


class TestStateSolve:
    def test_zero_data_stays_exactly_zero(self, disc_mixed, hyst_cfg,
                                          solver_short):
        reaction = ReactionFunction.linear(0.0, 0.0, 0.0)
        traj = solve_state(disc_mixed, constant_sfun(disc_mixed), reaction,
                           hyst_cfg, zero_source(disc_mixed, solver_short),
                           solver_short)
        np.testing.assert_array_equal(traj.states,
                                      np.zeros_like(traj.states))
        np.testing.assert_array_equal(traj.stop.values,
                                      np.zeros(solver_short.n_steps + 1))
        np.testing.assert_array_equal(traj.s_values,
                                      np.zeros(solver_short.n_steps + 1))

    def test_converges_to_discrete_steady_state(self, disc_dirichlet,
                                                hyst_cfg):
        solver = SolverConfig(dt=0.05, t_final=3.0)
        x = disc_dirichlet.coords[:, 0]
        profile = np.sin(np.pi * x) + 0.3 * x
        u = np.broadcast_to(
            profile, (solver.n_steps + 1, 1, x.size)).copy()
        reaction = ReactionFunction.linear(0.0, 0.0, 0.0)
        traj = solve_state(disc_dirichlet, constant_sfun(disc_dirichlet),
                           reaction, hyst_cfg, u, solver)
        A, active = generator_dense_1d(21, 1.0, 1.0, "dirichlet", "dirichlet")
        steady = np.zeros(x.size)
        steady[active] = np.linalg.solve(A, profile[active])
        np.testing.assert_allclose(traj.states[-1, 0], steady,
                                   rtol=0.0, atol=1e-8)

    def test_matches_dense_coupled_reference(self, disc_mixed,
                                             saturating_reaction):
        hyst = HysteresisConfig(a=-0.05, b=0.05, z0=0.0)
        sfun = constant_sfun(disc_mixed, 0.6)
        solver = SolverConfig(dt=0.02, t_final=1.0)
        u = sine_source(disc_mixed, solver)
        traj = solve_state(disc_mixed, sfun, saturating_reaction, hyst, u,
                           solver)

        A, active = generator_dense_1d(17, 1.0, 0.8, "dirichlet", "neumann")
        states, stops = imex_reference_1d(
            A, active, quad_weights_1d(17, 1.0),
            np.full(17, 0.6), saturating_reaction.value, u[:, 0],
            solver.dt, solver.n_steps, hyst.a, hyst.b, hyst.z0)
        np.testing.assert_allclose(traj.states[:, 0], states,
                                   rtol=0.0, atol=1e-12)
        np.testing.assert_allclose(traj.stop.values, stops,
                                   rtol=0.0, atol=1e-12)
        # the reference drives the band; make sure the case is not trivial
        assert np.abs(stops).max() == 0.05

    def test_trajectory_bookkeeping(self, disc_mixed, saturating_reaction):
        hyst = HysteresisConfig(a=-0.05, b=0.05, z0=0.0)
        sfun = constant_sfun(disc_mixed, 0.6)
        solver = SolverConfig(dt=0.02, t_final=0.5)
        traj = solve_state(disc_mixed, sfun, saturating_reaction, hyst,
                           sine_source(disc_mixed, solver), solver)
        np.testing.assert_array_equal(traj.times, solver.times())
        np.testing.assert_array_equal(traj.stop.times, solver.times())
        for k in range(solver.n_steps + 1):
            assert traj.s_values[k] == evaluate_S(disc_mixed, sfun,
                                                  traj.states[k])
        np.testing.assert_array_equal(traj.stop_offsets,
                                      traj.stop.values - traj.s_values)
        assert traj.stop.values.min() >= hyst.a
        assert traj.stop.values.max() <= hyst.b
        # Dirichlet end stays pinned
        np.testing.assert_array_equal(traj.states[:, 0, 0],
                                      np.zeros(solver.n_steps + 1))

    def test_runs_are_deterministic(self, disc_mixed, hyst_cfg,
                                    linear_reaction, solver_short):
        u = sine_source(disc_mixed, solver_short)
        sfun = constant_sfun(disc_mixed)
        a = solve_state(disc_mixed, sfun, linear_reaction, hyst_cfg, u,
                        solver_short)
        b = solve_state(disc_mixed, sfun, linear_reaction, hyst_cfg, u,
                        solver_short)
        np.testing.assert_array_equal(a.states, b.states)
        np.testing.assert_array_equal(a.stop.values, b.stop.values)

    def test_truncated_run_is_a_bitwise_prefix(self, disc_mixed, hyst_cfg,
                                               linear_reaction):
        long = SolverConfig(dt=0.02, t_final=1.0)
        short = SolverConfig(dt=0.02, t_final=0.6)
        u = sine_source(disc_mixed, long)
        sfun = constant_sfun(disc_mixed)
        full = solve_state(disc_mixed, sfun, linear_reaction, hyst_cfg, u,
                           long)
        part = solve_state(disc_mixed, sfun, linear_reaction, hyst_cfg,
                           u[:short.n_steps + 1], short)
        np.testing.assert_array_equal(part.states,
                                      full.states[:short.n_steps + 1])
        np.testing.assert_array_equal(part.stop.values,
                                      full.stop.values[:short.n_steps + 1])

    def test_source_shape_is_checked(self, disc_mixed, hyst_cfg,
                                     linear_reaction, solver_short):
        with pytest.raises(GridMismatchError):
            solve_state(disc_mixed, constant_sfun(disc_mixed),
                        linear_reaction, hyst_cfg,
                        np.zeros((3, 1, disc_mixed.n_nodes)), solver_short)

    def test_blowup_raises(self, disc_mixed, hyst_cfg):
        reaction = ReactionFunction.linear(0.0, 50.0, 0.0)
        solver = SolverConfig(dt=0.1, t_final=5.0)
        u = np.ones((solver.n_steps + 1, 1, disc_mixed.n_nodes))
        with pytest.raises(BlowupError):
            solve_state(disc_mixed, constant_sfun(disc_mixed), reaction,
                        hyst_cfg, u, solver)


class TestConvergenceSmoke:
    def test_temporal_order_is_near_one(self, hyst_cfg):
        from stopsim import BoundarySides, DomainSpec, assemble
        disc = assemble(
            DomainSpec(dimension=1, extent=(1.0,), resolution=(21,)),
            [BoundarySides(left="dirichlet", right="dirichlet")],
            [1.0],
        )
        wide = HysteresisConfig(a=-5.0, b=5.0, z0=0.0)
        reaction = ReactionFunction.linear(0.5, -1.0, 0.8)
        sfun = constant_sfun(disc)
        x = disc.coords[:, 0]
        profile = x * (1.0 - x)

        def run(dt):
            solver = SolverConfig(dt=dt, t_final=0.4)
            t = solver.times()
            u = 2.0 * np.sin(1.3 * t + 0.4)[:, None, None] \
                * profile[None, None, :]
            return solve_state(disc, sfun, reaction, wide, u, solver)

        finals = [run(dt).states[-1] for dt in (0.04, 0.02, 0.01, 0.005)]
        errs = [quad_norm(disc, finals[i] - finals[i + 1])
                for i in range(3)]
        orders = [np.log2(errs[i] / errs[i + 1]) for i in range(2)]
        assert min(orders) > 0.85

    def test_spatial_order_is_near_two(self, hyst_cfg):
        from stopsim import BoundarySides, DomainSpec, assemble
        reaction = ReactionFunction.linear(0.0, 0.0, 0.0)
        errs = []
        for n in (11, 21, 41):
            disc = assemble(
                DomainSpec(dimension=1, extent=(1.0,), resolution=(n,)),
                [BoundarySides(left="dirichlet", right="dirichlet")],
                [1.0],
            )
            solver = SolverConfig(dt=0.05, t_final=3.0)
            x = disc.coords[:, 0]
            u = np.broadcast_to(np.pi**2 * np.sin(np.pi * x),
                                (solver.n_steps + 1, 1, n)).copy()
            traj = solve_state(disc, constant_sfun(disc), reaction, hyst_cfg,
                               u, solver)
            errs.append(np.abs(traj.states[-1, 0] - np.sin(np.pi * x)).max())
        orders = [np.log2(errs[i] / errs[i + 1]) for i in range(2)]
        assert min(orders) > 1.8


class TestPicardScheme:
    def scenario(self, disc):
        hyst = HysteresisConfig(a=-0.05, b=0.05, z0=0.0)
        sfun = constant_sfun(disc, 0.6)
        reaction = ReactionFunction.saturating(-0.7, 1.1, 0.8, 0.9)
        return hyst, sfun, reaction

    def test_fixed_point_matches_direct_scheme(self, disc_mixed):
        hyst, sfun, reaction = self.scenario(disc_mixed)
        direct = SolverConfig(dt=0.02, t_final=1.0)
        sliced = SolverConfig(dt=0.02, t_final=1.0, scheme="picard-sliced",
                              slice_length=0.1, picard_tol=1e-13)
        u = sine_source(disc_mixed, direct)
        a = solve_state(disc_mixed, sfun, reaction, hyst, u, direct)
        b = solve_state(disc_mixed, sfun, reaction, hyst, u, sliced)
        np.testing.assert_allclose(b.states, a.states, rtol=0.0, atol=1e-9)
        np.testing.assert_allclose(b.stop.values, a.stop.values,
                                   rtol=0.0, atol=1e-9)
        assert len(b.picard_iterations) == 10
        assert all(sweeps >= 1 for sweeps in b.picard_iterations)
        assert a.picard_iterations == []

    def test_uneven_tail_slice_is_handled(self, disc_mixed):
        hyst, sfun, reaction = self.scenario(disc_mixed)
        direct = SolverConfig(dt=0.05, t_final=0.35)
        sliced = SolverConfig(dt=0.05, t_final=0.35, scheme="picard-sliced",
                              slice_length=0.2, picard_tol=1e-13)
        u = sine_source(disc_mixed, direct)
        a = solve_state(disc_mixed, sfun, reaction, hyst, u, direct)
        b = solve_state(disc_mixed, sfun, reaction, hyst, u, sliced)
        np.testing.assert_allclose(b.states, a.states, rtol=0.0, atol=1e-9)
        assert len(b.picard_iterations) == 2

    def test_sweeps_contract_and_shorter_slices_contract_faster(
            self, disc_mixed):
        hyst = HysteresisConfig(a=-0.5, b=0.5, z0=0.0)
        sfun = constant_sfun(disc_mixed, 0.6)
        reaction = ReactionFunction.linear(0.0, -3.0, 0.5)
        dt = 0.02
        u = sine_source(disc_mixed, SolverConfig(dt=dt, t_final=1.0))

        def slice_ratios(ns):
            cursor = StopCursor(hyst, 0.0)
            y0 = np.zeros((1, disc_mixed.n_nodes))
            *_, ratios = picard_slice_iterate(
                disc_mixed, sfun, reaction, cursor, y0, u[:ns + 1],
                dt, 1e-13, 60)
            return ratios

        long_ratios = slice_ratios(25)
        short_ratios = slice_ratios(5)
        assert long_ratios and short_ratios
        assert max(long_ratios) < 1.0
        assert max(short_ratios) < max(long_ratios)

    def test_non_contraction_raises(self, disc_mixed, hyst_cfg):
        reaction = ReactionFunction.linear(0.0, 50.0, 0.0)
        solver = SolverConfig(dt=0.05, t_final=1.0, scheme="picard-sliced",
                              picard_tol=1e-12, picard_max_iters=3)
        u = np.ones((solver.n_steps + 1, 1, disc_mixed.n_nodes))
        with pytest.raises(NonContractionError):
            solve_state(disc_mixed, constant_sfun(disc_mixed), reaction,
                        hyst_cfg, u, solver)


class TestBoundednessReport:
    def test_zero_run_reports_zero(self, disc_mixed, hyst_cfg, solver_short):
        reaction = ReactionFunction.linear(0.0, 0.0, 0.0)
        traj = solve_state(disc_mixed, constant_sfun(disc_mixed), reaction,
                           hyst_cfg, zero_source(disc_mixed, solver_short),
                           solver_short)
        report = boundedness_report(disc_mixed, traj, solver_short)
        assert report.max_state_norm == 0.0
        assert report.source_norm == 0.0
        assert report.ratio == 0.0

    def test_linear_scaling_of_the_ingredients(self, disc_mixed, hyst_cfg,
                                               solver_short):
        reaction = ReactionFunction.linear(0.0, 0.0, 0.0)
        sfun = constant_sfun(disc_mixed)
        u = sine_source(disc_mixed, solver_short)
        r1 = boundedness_report(
            disc_mixed,
            solve_state(disc_mixed, sfun, reaction, hyst_cfg, u,
                        solver_short),
            solver_short)
        r10 = boundedness_report(
            disc_mixed,
            solve_state(disc_mixed, sfun, reaction, hyst_cfg, 10.0 * u,
                        solver_short),
            solver_short)
        assert r10.max_state_norm == pytest.approx(10 * r1.max_state_norm,
                                                   rel=1e-12)
        assert r10.source_norm == pytest.approx(10 * r1.source_norm,
                                                rel=1e-12)
        assert r1.ratio == pytest.approx(
            r1.max_state_norm / (1 + r1.source_norm), rel=1e-15)
