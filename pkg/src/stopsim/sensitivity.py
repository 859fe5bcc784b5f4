"""Directional derivative of the control-to-state map via the linearized
recursion, plus finite-difference verification harnesses.

For a base trajectory y (with hysteresis output z) and a source direction h,
the sensitivity zeta solves the linearization of the IMEX recursion:

    (D + dt L) zeta[k+1] = D (zeta[k] + dt (f'[(y[k], z[k]); (zeta[k], w[k])] + h[k]))

where w is the directional derivative of the stop output, advanced by the
one-sided clamp rule on the pair (v = S y, dv = S zeta).  Branch decisions
replay the exact offset states stored on the base trajectory, so the
linearization follows bitwise the same saturation pattern the base solve
took.  Starting state is zeta_0 = 0: perturbing the source cannot move the
fixed initial condition.

The finite-difference harnesses quantify how fast difference quotients of
the full nonlinear solve approach zeta, optionally with an o(lambda)
remainder added to the increment; surviving that remainder is what separates
this notion of derivative from a plain one-sided Gateaux limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GridMismatchError, InvalidConfigError, NonContractionError
from .evolution import (
    ReactionFunction,
    SolverConfig,
    Trajectory,
    _factorize,
    _imex_step,
    solve_state,
)
from .hysteresis import HysteresisConfig
from .spatial import SFunctional, SpatialDiscretization, evaluate_S, quad_norm, s_operator_norm

__all__ = [
    "LinearizedProblem",
    "SensitivityRecord",
    "FdStudy",
    "solve_sensitivity",
    "fd_convergence_study",
    "hadamard_perturbed_quotient",
]


@dataclass(frozen=True)
class LinearizedProblem:
    """Base trajectory, perturbation direction, and the reaction derivative rule."""

    base: Trajectory
    direction: np.ndarray  # (N+1, m, n_nodes) source direction h
    reaction: ReactionFunction
    hyst_cfg: HysteresisConfig

    def __post_init__(self):
        h = np.asarray(self.direction, dtype=float)
        if h.shape != self.base.states.shape:
            raise GridMismatchError(
                f"direction shape {h.shape} must match base states "
                f"{self.base.states.shape}"
            )
        if self.hyst_cfg != self.base.hyst_cfg:
            raise InvalidConfigError("hysteresis config differs from the base trajectory's")
        object.__setattr__(self, "direction", h)


@dataclass
class SensitivityRecord:
    """Discrete sensitivity path and the hysteresis-output derivative."""

    times: np.ndarray
    states: np.ndarray           # zeta_k, (N+1, m, n_nodes)
    stop_derivative: np.ndarray  # w_k = directional derivative of z_k
    s_values: np.ndarray         # S zeta_k
    derivative_is_exact: bool    # False when the reaction derivative is tabulated
    slice_steps_used: int = 0    # nonzero for the Picard-sliced scheme


def _advance_stop_derivative(cfg, w_prev, v_next, omega, dv_next):
    """One-sided derivative step, branching on the base offset like the stop does."""
    lo = cfg.a - v_next
    hi = cfg.b - v_next
    if w_prev < lo or w_prev > hi:
        return -dv_next
    if w_prev == lo:
        neg = -dv_next
        return neg if neg > omega else omega
    if w_prev == hi:
        neg = -dv_next
        return neg if neg < omega else omega
    return omega


def solve_sensitivity(problem: LinearizedProblem, disc, sfun, solver) -> SensitivityRecord:
    """Integrate the linearized recursion along the base trajectory."""
    base = problem.base
    n_steps = solver.n_steps
    if base.states.shape[0] != n_steps + 1 or not np.array_equal(base.times, solver.times()):
        raise GridMismatchError("base trajectory was not solved on this solver grid")

    if solver.scheme == "picard-sliced":
        return _solve_sensitivity_picard(problem, disc, sfun, solver)

    h = problem.direction
    reaction = problem.reaction
    cfg = problem.hyst_cfg
    m, n_nodes = disc.n_components, disc.n_nodes

    zeta = np.zeros((n_steps + 1, m, n_nodes))
    wz = np.zeros(n_steps + 1)      # derivative of the stop output
    dv = np.zeros(n_steps + 1)      # S zeta
    omega = 0.0                     # carried as wz - dv; zero since zeta_0 = 0

    lus = _factorize(disc, solver.dt)
    zk = zeta[0]
    for k in range(n_steps):
        rhs = reaction.directional(base.states[k], base.stop.values[k], zk, wz[k]) + h[k]
        zk = _imex_step(disc, lus, solver.dt, zk, rhs)
        if not np.all(np.isfinite(zk)):
            raise InvalidConfigError(
                f"sensitivity state became non-finite at step {k + 1}"
            )
        zeta[k + 1] = zk
        dv[k + 1] = evaluate_S(disc, sfun, zk)
        omega = _advance_stop_derivative(
            cfg, base.stop_offsets[k], base.s_values[k + 1], omega, dv[k + 1]
        )
        wz[k + 1] = omega + dv[k + 1]

    return SensitivityRecord(
        times=base.times,
        states=zeta,
        stop_derivative=wz,
        s_values=dv,
        derivative_is_exact=reaction.derivative_is_exact,
    )


def _capped_slice_steps(disc, sfun, reaction, solver):
    """Slice length honoring the contraction heuristic L_eff * slice < 1/2."""
    steps = solver.slice_steps
    l_eff = reaction.lipschitz_constant * (1.0 + 2.0 * s_operator_norm(disc, sfun))
    if l_eff > 0:
        cap = max(1, int(math.floor(0.5 / (l_eff * solver.dt))))
        steps = min(steps, cap)
    return steps


def _solve_sensitivity_picard(problem, disc, sfun, solver):
    """Sliced fixed-point variant: sweeps freeze the linearized source."""
    base = problem.base
    h = problem.direction
    reaction = problem.reaction
    cfg = problem.hyst_cfg
    n_steps = solver.n_steps
    m, n_nodes = disc.n_components, disc.n_nodes

    zeta = np.zeros((n_steps + 1, m, n_nodes))
    wz = np.zeros(n_steps + 1)
    dv = np.zeros(n_steps + 1)
    lus = _factorize(disc, solver.dt)
    slice_steps = _capped_slice_steps(disc, sfun, reaction, solver)

    def replay(start, ns, zs, omega_start):
        """Recompute (dv, omega, wz) over a slice from its zeta iterate."""
        om = omega_start
        dvs = np.empty(ns + 1)
        wzs = np.empty(ns + 1)
        dvs[0] = evaluate_S(disc, sfun, zs[0])
        wzs[0] = om + dvs[0]
        for i in range(1, ns + 1):
            dvs[i] = evaluate_S(disc, sfun, zs[i])
            om = _advance_stop_derivative(
                cfg, base.stop_offsets[start + i - 1],
                base.s_values[start + i], om, dvs[i],
            )
            wzs[i] = om + dvs[i]
        return dvs, wzs, om

    omega = 0.0
    step = 0
    while step < n_steps:
        ns = min(slice_steps, n_steps - step)
        z_old = np.broadcast_to(zeta[step], (ns + 1, m, n_nodes)).copy()
        dv_old, wz_old, _ = replay(step, ns, z_old, omega)
        converged = False
        for _ in range(solver.picard_max_iters):
            z_new = np.empty_like(z_old)
            z_new[0] = zeta[step]
            for i in range(ns):
                k = step + i
                rhs = reaction.directional(
                    base.states[k], base.stop.values[k], z_old[i], wz_old[i]
                ) + h[k]
                z_new[i + 1] = _imex_step(disc, lus, solver.dt, z_new[i], rhs)
            diff = max(quad_norm(disc, z_new[i] - z_old[i]) for i in range(ns + 1))
            z_old = z_new
            dv_old, wz_old, omega_end = replay(step, ns, z_old, omega)
            if diff <= solver.picard_tol:
                converged = True
                break
        if not converged:
            raise NonContractionError(
                f"sensitivity Picard sweeps did not contract within "
                f"{solver.picard_max_iters} iterations; reduce slice_length "
                f"(currently {ns} steps)"
            )
        zeta[step + 1:step + ns + 1] = z_old[1:]
        dv[step + 1:step + ns + 1] = dv_old[1:]
        wz[step + 1:step + ns + 1] = wz_old[1:]
        omega = omega_end
        step += ns

    return SensitivityRecord(
        times=base.times,
        states=zeta,
        stop_derivative=wz,
        s_values=dv,
        derivative_is_exact=reaction.derivative_is_exact,
        slice_steps_used=slice_steps,
    )


@dataclass
class FdStudy:
    """Difference-quotient errors e(lambda) against the computed sensitivity."""

    lambdas: np.ndarray
    errors: np.ndarray
    record: SensitivityRecord
    base: Trajectory


def _check_lambdas(lambdas):
    lam = np.asarray(lambdas, dtype=float)
    if lam.ndim != 1 or lam.size == 0:
        raise InvalidConfigError("lambda sequence must be a nonempty 1-D array")
    if np.any(lam <= 0) or np.any(np.diff(lam) >= 0):
        raise InvalidConfigError("lambda sequence must be positive and strictly decreasing")
    return lam


def fd_convergence_study(disc, sfun, reaction, hyst_cfg, u, h, lambdas, solver) -> FdStudy:
    """e(lambda) = max_k |(G(u + lambda h) - G(u))_k / lambda - zeta_k|_quad."""
    return hadamard_perturbed_quotient(
        disc, sfun, reaction, hyst_cfg, u, h, None, lambdas, solver
    )


def hadamard_perturbed_quotient(disc, sfun, reaction, hyst_cfg, u, h,
                                remainder, lambdas, solver) -> FdStudy:
    """Like ``fd_convergence_study`` but perturbing with u + lambda h + r(lambda).

    ``remainder`` maps lambda to a source-shaped array with r(lambda)/lambda -> 0
    (or is None for the plain study).  Convergence of e(lambda) despite the
    remainder is what distinguishes the derivative from a directional limit.
    """
    lam = _check_lambdas(lambdas)
    u = np.asarray(u, dtype=float)
    h = np.asarray(h, dtype=float)
    if h.shape != u.shape:
        raise GridMismatchError(f"direction shape {h.shape} must match source {u.shape}")

    base = solve_state(disc, sfun, reaction, hyst_cfg, u, solver)
    record = solve_sensitivity(
        LinearizedProblem(base=base, direction=h, reaction=reaction, hyst_cfg=hyst_cfg),
        disc, sfun, solver,
    )

    errors = np.empty(lam.size)
    for i, s in enumerate(lam):
        u_pert = u + s * h
        if remainder is not None:
            r = np.asarray(remainder(s), dtype=float)
            if r.shape != u.shape:
                raise GridMismatchError(
                    f"remainder shape {r.shape} must match source {u.shape}"
                )
            u_pert = u_pert + r
        pert = solve_state(disc, sfun, reaction, hyst_cfg, u_pert, solver)
        quot = (pert.states - base.states) / s
        errors[i] = max(
            quad_norm(disc, quot[k] - record.states[k]) for k in range(len(base.times))
        )

    return FdStudy(lambdas=lam, errors=errors, record=record, base=base)
