import copy
import importlib.resources
import json

import numpy as np
import pytest

from stopsim import (
    HysteresisConfig,
    ScenarioValidationError,
    apply_B,
    build_control_problem,
    load_hysteresis_config,
    load_scenario,
    loads,
    solve_state,
)


def bundled(name):
    root = importlib.resources.files("stopsim") / "scenarios"
    return json.loads((root / f"{name}.json").read_text())


def base_scenario():
    return {
        "domain": {"dimension": 1, "extent": [1.0], "resolution": [9]},
        "boundaries": [{"left": "dirichlet", "right": "neumann"}],
        "diffusion": [0.8],
        "s_weight": {"kind": "constant", "value": 0.5},
        "hysteresis": {"a": -1.0, "b": 1.0, "z0": 0.0},
        "reaction": {"kind": "linear", "constant": 0.0, "state": -0.5,
                     "hysteresis": 0.3},
        "solver": {"dt": 0.1, "t_final": 0.5},
        "source": {"kind": "zero"},
    }


def expect_error(cfg, fragment, needs=("state",)):
    with pytest.raises(ScenarioValidationError) as err:
        load_scenario(cfg, needs)
    assert fragment in str(err.value)
    return err.value


class TestBundledScenarios:
    def test_zero_scenario_loads(self):
        scn = load_scenario(bundled("zero"))
        assert scn.disc.n_nodes == 31
        assert scn.solver.n_steps == 20
        np.testing.assert_array_equal(scn.source, np.zeros_like(scn.source))

    def test_linear_quadratic_scenario_loads(self):
        scn = load_scenario(bundled("linear_quadratic"),
                            needs=("state", "control"))
        assert scn.control is not None
        assert scn.control.spec.mode == "distributed"
        assert scn.control.spec.n_coefficients == 6
        assert scn.control.target_kind == "from-control"
        assert scn.metadata["alpha"] < 0.5

    def test_saturating_scenario_loads(self):
        scn = load_scenario(bundled("saturating"),
                            needs=("state", "direction", "lambdas"))
        assert scn.direction is not None
        assert scn.direction.shape == scn.source.shape
        assert len(scn.lambdas) == 5
        assert all(x > y for x, y in zip(scn.lambdas, scn.lambdas[1:]))

    def test_neumann_scenario_loads(self):
        scn = load_scenario(bundled("neumann_conservation"))
        comp = scn.disc.components[0]
        assert not comp.dirichlet_mask.any()
        assert scn.solver.n_steps == 1010


class TestStructuralValidation:
    def test_a_must_be_below_b(self):
        cfg = base_scenario()
        cfg["hysteresis"] = {"a": 1.0, "b": -1.0, "z0": 0.0}
        err = expect_error(cfg, "hysteresis.a")
        assert "strictly less" in str(err)

    def test_z0_must_sit_in_the_band(self):
        cfg = base_scenario()
        cfg["hysteresis"]["z0"] = 2.0
        expect_error(cfg, "hysteresis.z0")

    def test_missing_required_block(self):
        cfg = base_scenario()
        del cfg["solver"]
        err = expect_error(cfg, "solver")
        assert "required field is missing" in str(err)

    def test_unknown_fields_are_rejected(self):
        cfg = base_scenario()
        cfg["mystery"] = 1
        err = expect_error(cfg, "mystery")
        assert "unknown field" in str(err)
        cfg = base_scenario()
        cfg["hysteresis"]["bogus"] = 1
        expect_error(cfg, "hysteresis.bogus")

    def test_boundary_label_paths(self):
        cfg = base_scenario()
        cfg["boundaries"] = [{"left": "weird", "right": "neumann"}]
        expect_error(cfg, "boundaries[0].left")

    def test_diffusion_count_and_sign(self):
        cfg = base_scenario()
        cfg["diffusion"] = [0.8, 1.0]
        expect_error(cfg, "diffusion")
        cfg["diffusion"] = [-0.8]
        expect_error(cfg, "diffusion")

    def test_s_weight_validation(self):
        cfg = base_scenario()
        cfg["s_weight"] = {"kind": "constant", "value": 0.0}
        expect_error(cfg, "s_weight.value")
        cfg["s_weight"] = {"kind": "values", "values": [1.0, 2.0]}
        expect_error(cfg, "s_weight.values")

    def test_solver_validation_paths(self):
        cfg = base_scenario()
        cfg["solver"] = {"dt": 0.1, "t_final": 0.55}
        expect_error(cfg, "solver")
        cfg["solver"] = {"dt": -0.1, "t_final": 0.5}
        expect_error(cfg, "solver.dt")

    def test_non_object_input(self):
        with pytest.raises(ScenarioValidationError):
            load_scenario([1, 2, 3])

    def test_seed_parsing(self):
        cfg = base_scenario()
        cfg["seed"] = 7
        assert load_scenario(cfg).seed == 7
        cfg["seed"] = -1
        expect_error(cfg, "seed")
        cfg["seed"] = 1.5
        expect_error(cfg, "seed")


class TestSourceParsing:
    def test_sine_source_values(self):
        cfg = base_scenario()
        cfg["source"] = {"kind": "sine", "amplitude": 2.0, "omega": 4.0,
                         "profile": {"kind": "sine", "mode": 1}}
        scn = load_scenario(cfg)
        t = scn.solver.times()
        x = scn.disc.coords[:, 0]
        expected = (2.0 * np.sin(4.0 * t))[:, None, None] \
            * np.sin(np.pi * x)[None, None, :]
        np.testing.assert_allclose(scn.source, expected, rtol=1e-15)

    def test_pulse_window_is_half_open(self):
        cfg = base_scenario()
        cfg["source"] = {"kind": "pulse", "value": 3.0, "start": 0.1,
                         "stop": 0.3}
        scn = load_scenario(cfg)
        amp = scn.source[:, 0, 0]
        np.testing.assert_array_equal(amp, [0.0, 3.0, 3.0, 0.0, 0.0, 0.0])

    def test_pulse_needs_a_forward_window(self):
        cfg = base_scenario()
        cfg["source"] = {"kind": "pulse", "value": 1.0, "start": 0.3,
                         "stop": 0.3}
        expect_error(cfg, "source.stop")

    def test_component_selection(self):
        cfg = base_scenario()
        cfg["source"] = {"kind": "constant", "value": 1.0, "component": 5}
        expect_error(cfg, "source.component")

    def test_profile_values_shape(self):
        cfg = base_scenario()
        cfg["source"] = {"kind": "constant", "value": 1.0,
                         "profile": {"kind": "values", "values": [1.0]}}
        expect_error(cfg, "source.profile.values")

    def test_direction_uses_the_same_schema(self):
        cfg = base_scenario()
        cfg["direction"] = {"kind": "pulse", "value": 0.2, "start": 0.0,
                            "stop": 0.2}
        scn = load_scenario(cfg, needs=("state", "direction"))
        assert scn.direction.shape == scn.source.shape
        cfg2 = base_scenario()
        expect_error(cfg2, "direction", needs=("state", "direction"))


class TestLambdas:
    def test_must_decrease(self):
        cfg = base_scenario()
        cfg["lambdas"] = [1e-3, 1e-2]
        expect_error(cfg, "lambdas")
        cfg["lambdas"] = [1e-2, -1e-3]
        expect_error(cfg, "lambdas")
        cfg["lambdas"] = []
        expect_error(cfg, "lambdas")

    def test_valid_sequence_is_stored(self):
        cfg = base_scenario()
        cfg["lambdas"] = [1e-1, 1e-2, 1e-3]
        scn = load_scenario(cfg, needs=("state", "lambdas"))
        assert scn.lambdas == (1e-1, 1e-2, 1e-3)


class TestControlParsing:
    def control_block(self):
        return {
            "mode": "distributed",
            "time_knots": 2,
            "spatial_modes": {"kind": "constant"},
            "kappa": 0.1,
            "coefficients": [0.3, -0.2],
            "target": {"kind": "from-control", "coefficients": [0.5, 0.1]},
        }

    def test_coefficient_counts_are_enforced(self):
        cfg = base_scenario()
        cfg["control"] = self.control_block()
        cfg["control"]["coefficients"] = [1.0]
        expect_error(cfg, "control.coefficients", needs=("state", "control"))
        cfg["control"] = self.control_block()
        cfg["control"]["target"]["coefficients"] = [1.0, 2.0, 3.0]
        expect_error(cfg, "control.target.coefficients",
                     needs=("state", "control"))

    def test_kappa_must_be_positive(self):
        cfg = base_scenario()
        cfg["control"] = self.control_block()
        cfg["control"]["kappa"] = 0.0
        expect_error(cfg, "control.kappa", needs=("state", "control"))

    def test_boundary_mode_needs_neumann_nodes(self):
        cfg = base_scenario()
        cfg["boundaries"] = [{"left": "dirichlet", "right": "dirichlet"}]
        cfg["control"] = {"mode": "boundary", "time_knots": 1, "kappa": 0.1,
                          "target": {"kind": "zero"}}
        expect_error(cfg, "control.component", needs=("state", "control"))

    def test_optimizer_defaults_and_overrides(self):
        cfg = base_scenario()
        cfg["control"] = self.control_block()
        scn = load_scenario(cfg, needs=("state", "control"))
        assert scn.control.optimizer == {
            "max_iters": 100, "tol": 1e-8, "initial_step": 1.0,
            "armijo_c1": 1e-4, "max_halvings": 40}
        cfg["control"]["optimizer"] = {"max_iters": 7, "tol": 1e-5}
        scn = load_scenario(cfg, needs=("state", "control"))
        assert scn.control.optimizer["max_iters"] == 7
        assert scn.control.optimizer["tol"] == 1e-5
        assert scn.control.optimizer["max_halvings"] == 40
        cfg["control"]["optimizer"] = {"surprise": 1}
        expect_error(cfg, "control.optimizer.surprise",
                     needs=("state", "control"))

    def test_alpha_interacts_with_control(self):
        cfg = base_scenario()
        cfg["alpha"] = 0.75
        assert load_scenario(cfg).metadata["alpha"] == 0.75
        cfg["control"] = self.control_block()
        expect_error(cfg, "alpha", needs=("state", "control"))
        cfg["alpha"] = 0.25
        scn = load_scenario(cfg, needs=("state", "control"))
        assert scn.metadata["alpha"] == 0.25

    def test_build_control_problem_targets(self):
        cfg = base_scenario()
        cfg["control"] = self.control_block()
        cfg["control"]["target"] = {"kind": "zero"}
        scn = load_scenario(cfg, needs=("state", "control"))
        problem, spec, opts = build_control_problem(scn)
        np.testing.assert_array_equal(problem.target,
                                      np.zeros_like(problem.target))
        np.testing.assert_array_equal(spec.coefficients, [0.3, -0.2])
        assert opts["max_iters"] == 100

        cfg["control"]["target"] = {"kind": "constant", "value": 0.4}
        scn = load_scenario(cfg, needs=("state", "control"))
        problem, _, _ = build_control_problem(scn)
        np.testing.assert_array_equal(problem.target,
                                      np.full_like(problem.target, 0.4))

        cfg["control"]["target"] = {"kind": "from-control",
                                    "coefficients": [0.5, 0.1]}
        scn = load_scenario(cfg, needs=("state", "control"))
        problem, spec, _ = build_control_problem(scn)
        u_d = apply_B(scn.disc, spec.with_coefficients(
            np.array([0.5, 0.1])), scn.solver.times())
        ref = solve_state(scn.disc, scn.sfun, scn.reaction, scn.hyst_cfg,
                          u_d, scn.solver)
        np.testing.assert_array_equal(problem.target, ref.states)


class TestDiagnosticParsing:
    def test_defaults_are_supplied(self):
        cfg = base_scenario()
        scn = load_scenario(cfg, needs=("state", "diagnostic"))
        assert scn.diagnostic == {"theta": 0.5, "gamma": 0.5, "component": 0,
                                  "t_min": 1e-3, "t_max": 20.0, "t_count": 400}

    def test_bounds(self):
        cfg = base_scenario()
        cfg["diagnostic"] = {"theta": 1.0}
        expect_error(cfg, "diagnostic.theta", needs=("state", "diagnostic"))
        cfg["diagnostic"] = {"t_min": 2.0, "t_max": 1.0}
        expect_error(cfg, "diagnostic.t_max", needs=("state", "diagnostic"))
        cfg["diagnostic"] = {"theta": 0.25, "t_count": 17}
        scn = load_scenario(cfg, needs=("state", "diagnostic"))
        assert scn.diagnostic["theta"] == 0.25
        assert scn.diagnostic["t_count"] == 17


class TestReactionParsing:
    def test_saturating_parameters_by_name(self):
        cfg = base_scenario()
        cfg["reaction"] = {"kind": "saturating", "state_amplitude": -0.7,
                           "state_rate": 1.1, "hysteresis_amplitude": 0.8,
                           "hysteresis_rate": 0.9}
        scn = load_scenario(cfg)
        assert scn.reaction.kind == "saturating"
        assert scn.reaction.params == (-0.7, 1.1, 0.8, 0.9)

    def test_user_table_round_trip(self):
        cfg = base_scenario()
        cfg["reaction"] = {"kind": "user-table",
                           "y_grid": [-5.0, 0.0, 5.0],
                           "z_grid": [-1.0, 1.0],
                           "values": [[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]]}
        scn = load_scenario(cfg)
        assert scn.reaction.kind == "user-table"
        assert not scn.reaction.derivative_is_exact

    def test_bad_parameters_are_reported_with_path(self):
        cfg = base_scenario()
        cfg["reaction"] = {"kind": "linear", "constant": 0.0, "state": -0.5}
        expect_error(cfg, "reaction.hysteresis")
        cfg["reaction"] = {"kind": "linear", "constant": 0.0, "state": -0.5,
                           "hysteresis": 0.3, "growth_constant": -1.0}
        expect_error(cfg, "reaction.growth_constant")


class TestNeedsTokens:
    def test_spatial_only_scenarios_are_minimal(self):
        cfg = {"domain": {"dimension": 1, "extent": [1.0], "resolution": [5]},
               "boundaries": [{"left": "neumann", "right": "neumann"}],
               "diffusion": [1.0]}
        scn = load_scenario(cfg, needs=("spatial",))
        assert scn.disc is not None
        assert scn.solver is None
        assert scn.source is None

    def test_state_needs_everything(self):
        cfg = {"domain": {"dimension": 1, "extent": [1.0], "resolution": [5]},
               "boundaries": [{"left": "neumann", "right": "neumann"}],
               "diffusion": [1.0]}
        expect_error(cfg, "hysteresis")

    def test_present_blocks_are_validated_even_when_not_needed(self):
        cfg = base_scenario()
        cfg["lambdas"] = [1e-3, 1e-2]
        expect_error(cfg, "lambdas", needs=("state",))


class TestTextEntryPoints:
    def test_loads_rejects_bad_json(self):
        with pytest.raises(ScenarioValidationError) as err:
            loads("{not json")
        assert "invalid JSON" in str(err.value)

    def test_loads_round_trip(self):
        scn = loads(json.dumps(base_scenario()))
        assert scn.solver.n_steps == 5

    def test_hysteresis_config_accepts_both_shapes(self):
        bare = load_hysteresis_config({"a": -2.0, "b": 3.0, "z0": 0.5})
        wrapped = load_hysteresis_config(
            {"hysteresis": {"a": -2.0, "b": 3.0, "z0": 0.5}})
        assert bare == HysteresisConfig(a=-2.0, b=3.0, z0=0.5) == wrapped
