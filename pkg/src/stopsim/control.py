"""Tracking-type optimal control of the coupled state equation.

Controls are coefficient vectors over a tensor basis of time hat functions
with either distributed spatial modes (source acting on all nodes) or
Neumann-boundary node indicators (source supported on the labeled boundary
nodes, scaled by the boundary quadrature weight).  The reduced cost is

    J(c) = 1/2 sum_k dt |y_k - yd_k|_quad^2  +  kappa/2 <c, N c>

with N the control Gram matrix in the mode-appropriate measure.  Gradients
are assembled forward: one linearized solve per basis direction, plus one
more along the actual descent candidate so the Armijo test uses the honest
one-sided derivative even where hysteresis switching makes J nonsmooth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyBoundaryError, GridMismatchError, InvalidConfigError
from .evolution import ReactionFunction, SolverConfig, Trajectory, solve_state
from .hysteresis import HysteresisConfig
from .sensitivity import LinearizedProblem, solve_sensitivity
from .spatial import SFunctional, SpatialDiscretization, quad_norm, s_operator_norm

__all__ = [
    "ControlSpec",
    "ControlProblem",
    "OptimizeResult",
    "StabilityReport",
    "apply_B",
    "control_gram",
    "reduced_cost",
    "reduced_cost_directional_derivative",
    "optimize",
    "stability_study",
]


@dataclass(frozen=True)
class ControlSpec:
    """Coefficient vector over time-hat x spatial-mode basis functions.

    ``mode`` selects distributed injection (``spatial_modes`` is an
    (n_modes, m, n_nodes) array) or boundary injection (one indicator per
    Neumann boundary node of ``component``).  Coefficients are laid out
    time-major: c[j, s] = coefficients[j * n_spatial + s].
    """

    mode: str
    time_knots: int
    coefficients: np.ndarray
    spatial_modes: np.ndarray = None  # distributed only
    component: int = 0                # boundary only

    def __post_init__(self):
        if self.mode not in ("distributed", "boundary"):
            raise InvalidConfigError(
                f"control mode must be 'distributed' or 'boundary', got {self.mode!r}"
            )
        if int(self.time_knots) < 1:
            raise InvalidConfigError("time_knots must be at least 1")
        object.__setattr__(self, "time_knots", int(self.time_knots))
        coeffs = np.asarray(self.coefficients, dtype=float)
        if coeffs.ndim != 1 or coeffs.size < 1:
            raise InvalidConfigError("coefficients must be a nonempty vector")
        if not np.all(np.isfinite(coeffs)):
            raise InvalidConfigError("coefficients must be finite")
        coeffs = coeffs.copy()
        coeffs.setflags(write=False)
        object.__setattr__(self, "coefficients", coeffs)
        if self.mode == "distributed":
            if self.spatial_modes is None:
                raise InvalidConfigError("distributed control needs spatial_modes")
            modes = np.asarray(self.spatial_modes, dtype=float)
            if modes.ndim != 3:
                raise InvalidConfigError(
                    "spatial_modes must be an (n_modes, components, nodes) array"
                )
            modes = modes.copy()
            modes.setflags(write=False)
            object.__setattr__(self, "spatial_modes", modes)
            if coeffs.size != self.time_knots * modes.shape[0]:
                raise InvalidConfigError(
                    f"expected {self.time_knots * modes.shape[0]} coefficients "
                    f"(time_knots x n_modes), got {coeffs.size}"
                )
        else:
            object.__setattr__(self, "component", int(self.component))

    def with_coefficients(self, coefficients) -> "ControlSpec":
        return ControlSpec(
            mode=self.mode,
            time_knots=self.time_knots,
            coefficients=coefficients,
            spatial_modes=self.spatial_modes,
            component=self.component,
        )

    @property
    def n_coefficients(self):
        return self.coefficients.size


def _time_profiles(time_knots, times):
    """Hat-function values on the solver grid; a single knot means constant 1."""
    if time_knots == 1:
        return np.ones((1, times.size))
    knots = np.linspace(times[0], times[-1], time_knots)
    profiles = np.empty((time_knots, times.size))
    for j in range(time_knots):
        e = np.zeros(time_knots)
        e[j] = 1.0
        profiles[j] = np.interp(times, knots, e)
    return profiles


def _boundary_data(disc, spec):
    if spec.component < 0 or spec.component >= disc.n_components:
        raise InvalidConfigError(f"control component {spec.component} out of range")
    comp = disc.components[spec.component]
    nodes = comp.neumann_nodes
    if nodes.size == 0:
        raise EmptyBoundaryError(
            f"component {spec.component} has no Neumann boundary nodes to control"
        )
    return nodes, comp.surface_weights


def apply_B(disc, spec: ControlSpec, times) -> np.ndarray:
    """Expand control coefficients into a time-sampled source field.

    Distributed mode sums coefficient-weighted spatial modes; boundary mode
    places coefficient x surface-quadrature-weight values on the Neumann
    nodes of the chosen component (weight 1 at an interval end).
    """
    times = np.asarray(times, dtype=float)
    profiles = _time_profiles(spec.time_knots, times)
    if spec.mode == "distributed":
        modes = spec.spatial_modes
        if modes.shape[1:] != (disc.n_components, disc.n_nodes):
            raise GridMismatchError(
                f"spatial modes shaped {modes.shape[1:]} do not fit the grid "
                f"({disc.n_components}, {disc.n_nodes})"
            )
        c = spec.coefficients.reshape(spec.time_knots, modes.shape[0])
        return np.einsum("js,jk,smi->kmi", c, profiles, modes)
    nodes, surface = _boundary_data(disc, spec)
    if spec.coefficients.size != spec.time_knots * nodes.size:
        raise InvalidConfigError(
            f"expected {spec.time_knots * nodes.size} coefficients "
            f"(time_knots x Neumann nodes), got {spec.coefficients.size}"
        )
    c = spec.coefficients.reshape(spec.time_knots, nodes.size)
    g = profiles.T @ c  # control values per (time, boundary node)
    u = np.zeros((times.size, disc.n_components, disc.n_nodes))
    u[:, spec.component, nodes] = g * surface
    return u


def control_gram(disc, spec: ControlSpec, times) -> np.ndarray:
    """Gram matrix N of the basis in the control measure, time-quadrature dt.

    Distributed: spatial factor = quadrature inner products of the modes.
    Boundary: spatial factor = diag(surface weights) on control values.
    """
    times = np.asarray(times, dtype=float)
    dt = times[1] - times[0]
    profiles = _time_profiles(spec.time_knots, times)
    t_gram = dt * (profiles @ profiles.T)
    if spec.mode == "distributed":
        modes = spec.spatial_modes
        s_gram = np.einsum("smi,tmi,i->st", modes, modes, disc.quadrature)
    else:
        _, surface = _boundary_data(disc, spec)
        s_gram = np.diag(surface)
    return np.kron(t_gram, s_gram)


@dataclass(frozen=True)
class ControlProblem:
    """Target, regularization, and the full state-equation scenario."""

    disc: SpatialDiscretization
    sfun: SFunctional
    reaction: ReactionFunction
    hyst_cfg: HysteresisConfig
    solver: SolverConfig
    target: np.ndarray  # (N+1, m, n_nodes)
    kappa: float

    def __post_init__(self):
        kappa = float(self.kappa)
        if not math.isfinite(kappa) or kappa <= 0:
            raise InvalidConfigError(f"kappa must be positive, got {kappa}")
        object.__setattr__(self, "kappa", kappa)
        target = np.asarray(self.target, dtype=float)
        expected = (self.solver.n_steps + 1, self.disc.n_components, self.disc.n_nodes)
        if target.shape != expected:
            raise GridMismatchError(
                f"target must have shape {expected}, got {target.shape}"
            )
        object.__setattr__(self, "target", target)


def _solve(problem: ControlProblem, spec: ControlSpec) -> Trajectory:
    u = apply_B(problem.disc, spec, problem.solver.times())
    return solve_state(
        problem.disc, problem.sfun, problem.reaction, problem.hyst_cfg, u, problem.solver
    )


def _tracking_term(problem, traj):
    dt = problem.solver.dt
    mis = traj.states - problem.target
    total = sum(quad_norm(problem.disc, mk) ** 2 for mk in mis)
    return 0.5 * dt * total


def _cost_of(problem, spec, traj, gram):
    c = spec.coefficients
    return _tracking_term(problem, traj) + 0.5 * problem.kappa * float(c @ gram @ c)


def reduced_cost(problem: ControlProblem, spec: ControlSpec) -> float:
    """J(c): solves the state equation and evaluates the tracking cost."""
    gram = control_gram(problem.disc, spec, problem.solver.times())
    return _cost_of(problem, spec, _solve(problem, spec), gram)


def _directional(problem, spec, direction, base, gram):
    """One-sided derivative of J at ``spec`` along coefficient ``direction``."""
    direction = np.asarray(direction, dtype=float)
    if direction.shape != spec.coefficients.shape:
        raise GridMismatchError(
            f"direction shape {direction.shape} must match coefficients "
            f"{spec.coefficients.shape}"
        )
    h_src = apply_B(problem.disc, spec.with_coefficients(direction), problem.solver.times())
    record = solve_sensitivity(
        LinearizedProblem(
            base=base, direction=h_src,
            reaction=problem.reaction, hyst_cfg=problem.hyst_cfg,
        ),
        problem.disc, problem.sfun, problem.solver,
    )
    dt = problem.solver.dt
    q = problem.disc.quadrature
    mis = base.states - problem.target
    track = dt * float(np.einsum("kmi,kmi,i->", mis, record.states, q))
    return track + problem.kappa * float(spec.coefficients @ gram @ direction)


def reduced_cost_directional_derivative(
    problem: ControlProblem, spec: ControlSpec, direction
) -> float:
    """J'(c; d) = sum_k dt <y_k - yd_k, zeta_k>_quad + kappa <c, N d>."""
    gram = control_gram(problem.disc, spec, problem.solver.times())
    base = _solve(problem, spec)
    return _directional(problem, spec, direction, base, gram)


@dataclass
class OptimizeResult:
    spec: ControlSpec
    cost: float
    history: list = field(default_factory=list)  # rows (iteration, J, grad_inf, step)
    status: str = "max-iterations"               # converged | max-iterations | stalled


def optimize(problem: ControlProblem, spec: ControlSpec, *,
             max_iters: int = 100, tol: float = 1e-8,
             armijo_c1: float = 1e-4, initial_step: float = 1.0,
             max_halvings: int = 40) -> OptimizeResult:
    """Steepest descent on the reduced cost with Armijo backtracking.

    The gradient is assembled componentwise from forward sensitivities; the
    predicted decrease for the line search is the one-sided derivative along
    the candidate step itself.  A failed line search (or an ascent-only
    corner) reports status 'stalled' and returns the best iterate; accepted
    steps produce a non-increasing cost history.
    """
    if max_iters < 1:
        raise InvalidConfigError("max_iters must be at least 1")
    gram = control_gram(problem.disc, spec, problem.solver.times())
    n = spec.n_coefficients
    history = []
    step = float(initial_step)
    best_spec, best_cost = spec, math.inf
    status = "max-iterations"

    for it in range(max_iters):
        base = _solve(problem, spec)
        cost = _cost_of(problem, spec, base, gram)
        if cost < best_cost:
            best_spec, best_cost = spec, cost

        grad = np.empty(n)
        for i in range(n):
            e = np.zeros(n)
            e[i] = 1.0
            grad[i] = _directional(problem, spec, e, base, gram)
        grad_inf = float(np.max(np.abs(grad)))

        if grad_inf <= tol:
            history.append((it, cost, grad_inf, 0.0))
            status = "converged"
            break

        predicted = _directional(problem, spec, -grad, base, gram)
        if predicted >= 0.0:
            history.append((it, cost, grad_inf, 0.0))
            status = "stalled"
            break

        accepted = None
        t = step
        for _ in range(max_halvings + 1):
            trial = spec.with_coefficients(spec.coefficients - t * grad)
            trial_cost = reduced_cost(problem, trial)
            if trial_cost <= cost + armijo_c1 * t * predicted:
                accepted = (trial, trial_cost, t)
                break
            t *= 0.5
        if accepted is None:
            history.append((it, cost, grad_inf, 0.0))
            status = "stalled"
            break

        spec, cost, t = accepted
        if cost < best_cost:
            best_spec, best_cost = spec, cost
        history.append((it, cost, grad_inf, t))
        step = 2.0 * t

    return OptimizeResult(spec=best_spec, cost=best_cost, history=history, status=status)


@dataclass
class StabilityReport:
    """Deviations of state and hysteresis output under control perturbations."""

    state_deviation: np.ndarray  # max_k |G(B u_n) - G(B u)|_quad
    stop_deviation: np.ndarray   # max_k |z_n - z|
    stop_bound: np.ndarray       # 2 ||S|| * state deviation
    bound_satisfied: np.ndarray


def stability_study(problem: ControlProblem, spec: ControlSpec,
                    perturbed_coefficients) -> StabilityReport:
    """Solve at ``spec`` and at each perturbed coefficient vector, compare.

    The hysteresis deviation is checked against twice the S operator norm
    times the state deviation (the stop's Lipschitz bound pushed through S).
    """
    base = _solve(problem, spec)
    s_norm = s_operator_norm(problem.disc, problem.sfun)
    state_dev, stop_dev = [], []
    for coeffs in perturbed_coefficients:
        traj = _solve(problem, spec.with_coefficients(coeffs))
        dev = max(
            quad_norm(problem.disc, traj.states[k] - base.states[k])
            for k in range(len(base.times))
        )
        state_dev.append(dev)
        stop_dev.append(float(np.max(np.abs(traj.stop.values - base.stop.values))))
    state_dev = np.asarray(state_dev)
    stop_dev = np.asarray(stop_dev)
    bound = 2.0 * s_norm * state_dev
    slack = 1e-12 * (1.0 + bound)
    return StabilityReport(
        state_deviation=state_dev,
        stop_deviation=stop_dev,
        stop_bound=bound,
        bound_satisfied=stop_dev <= bound + slack,
    )
