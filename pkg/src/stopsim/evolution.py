"""Time integration of the coupled state equation: the control-to-state map.

The state y is an m-component grid field driven by diffusion, a pointwise
reaction f(y, z), a source u, and the scalar hysteresis output z, which is
the stop operator applied to the running signal v_k = S y_k.  Starting from
y_0 = 0, the IMEX step treats diffusion implicitly and everything else
explicitly:

    (D + dt L) y[k+1] = D (y[k] + dt (f(y[k], z[k]) + u[k]))

with z advanced by the stop recursion after each step.  The Picard-sliced
scheme solves the same recursion slice by slice as a fixed point: each sweep
freezes reaction and hysteresis at the previous iterate, so the fixed point
satisfies the IMEX recursion exactly and the two schemes agree to the Picard
tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .errors import (
    BlowupError,
    GridMismatchError,
    InvalidConfigError,
    NonContractionError,
    NonsmoothPointError,
)
from .hysteresis import HysteresisConfig, PiecewiseLinearSignal, StopCursor
from .spatial import SFunctional, SpatialDiscretization, evaluate_S, implicit_step_matrix, quad_norm

__all__ = [
    "ReactionFunction",
    "SolverConfig",
    "Trajectory",
    "BoundednessReport",
    "solve_state",
    "picard_slice_iterate",
    "boundedness_report",
]

BLOWUP_GUARD = 1e12  # abort when any node magnitude exceeds this
_GROWTH_PROBE_SEED = 20260815
_GROWTH_PROBE_COUNT = 512

REACTION_KINDS = ("linear", "saturating", "logistic-capped", "user-table")


def _clip_directional(x, cap, d):
    """One-sided directional derivative of clip(x, -cap, cap) in direction d."""
    inner = np.where(np.abs(x) < cap, d, 0.0)
    at_hi = x == cap
    at_lo = x == -cap
    inner = np.where(at_hi, np.minimum(d, 0.0), inner)
    inner = np.where(at_lo, np.maximum(d, 0.0), inner)
    return inner


@dataclass(frozen=True)
class ReactionFunction:
    """Pointwise reaction f(y, z) from a small catalog, with declared bounds.

    ``growth_constant`` M must satisfy |f(y, z)| <= M (1 + |y| + |z|);
    a randomized probe enforces the declaration at construction.
    ``lipschitz_constant`` L is the declared local Lipschitz modulus used by
    slice-length heuristics.  For multi-component states the scalar rule is
    applied componentwise with the shared hysteresis value.
    """

    kind: str
    params: tuple = ()
    growth_constant: float = None
    lipschitz_constant: float = None
    table: tuple = None  # (y_grid, z_grid, values) for kind user-table

    def __post_init__(self):
        if self.kind not in REACTION_KINDS:
            raise InvalidConfigError(
                f"reaction kind must be one of {REACTION_KINDS}, got {self.kind!r}"
            )
        params = tuple(float(p) for p in self.params)
        if not all(math.isfinite(p) for p in params):
            raise InvalidConfigError("reaction parameters must be finite")
        object.__setattr__(self, "params", params)

        if self.kind == "user-table":
            if self.table is None:
                raise InvalidConfigError("user-table reaction needs a table")
            yg = np.asarray(self.table[0], dtype=float)
            zg = np.asarray(self.table[1], dtype=float)
            vals = np.asarray(self.table[2], dtype=float)
            if yg.ndim != 1 or zg.ndim != 1 or yg.size < 2 or zg.size < 2:
                raise InvalidConfigError("table grids need at least two points each")
            if np.any(np.diff(yg) <= 0) or np.any(np.diff(zg) <= 0):
                raise InvalidConfigError("table grids must be strictly increasing")
            if vals.shape != (yg.size, zg.size):
                raise InvalidConfigError(
                    f"table values must have shape {(yg.size, zg.size)}, got {vals.shape}"
                )
            if not np.all(np.isfinite(vals)):
                raise InvalidConfigError("table values must be finite")
            for a in (yg, zg, vals):
                a.setflags(write=False)
            object.__setattr__(self, "table", (yg, zg, vals))
        else:
            expected = {"linear": 3, "saturating": 4, "logistic-capped": 4}[self.kind]
            if len(params) != expected:
                raise InvalidConfigError(
                    f"{self.kind} reaction takes {expected} parameters, got {len(params)}"
                )
            if self.kind == "logistic-capped":
                if params[1] <= 0 or params[2] <= 0:
                    raise InvalidConfigError("logistic capacity and cap must be positive")

        growth = self._default_growth() if self.growth_constant is None else float(self.growth_constant)
        lips = self._default_lipschitz() if self.lipschitz_constant is None else float(self.lipschitz_constant)
        if not math.isfinite(growth) or growth < 0:
            raise InvalidConfigError("growth constant must be finite and nonnegative")
        if not math.isfinite(lips) or lips < 0:
            raise InvalidConfigError("Lipschitz constant must be finite and nonnegative")
        object.__setattr__(self, "growth_constant", growth)
        object.__setattr__(self, "lipschitz_constant", lips)
        self._probe_growth()

    def _default_growth(self):
        p = self.params
        if self.kind == "linear":
            return max(abs(p[0]), abs(p[1]), abs(p[2]))
        if self.kind == "saturating":
            return abs(p[0]) + abs(p[2])
        if self.kind == "logistic-capped":
            return max(p[2], abs(p[3]))
        yg, zg, vals = self.table
        return float(np.max(np.abs(vals)))

    def _default_lipschitz(self):
        p = self.params
        if self.kind == "linear":
            return max(abs(p[1]), abs(p[2]))
        if self.kind == "saturating":
            return max(abs(p[0] * p[1]), abs(p[2] * p[3]))
        if self.kind == "logistic-capped":
            # steepest slope of rate*y*(1-y/capacity) on the band where the
            # clip is inactive: slope^2 = rate^2 + 4*cap*rate/capacity there
            rate, capacity, cap, cz = p
            slope = math.sqrt(rate * rate + 4.0 * cap * abs(rate) / capacity)
            return max(slope, abs(cz))
        yg, zg, vals = self.table
        dy = np.max(np.abs(np.diff(vals, axis=0)) / np.diff(yg)[:, None]) if yg.size > 1 else 0.0
        dz = np.max(np.abs(np.diff(vals, axis=1)) / np.diff(zg)[None, :]) if zg.size > 1 else 0.0
        return float(max(dy, dz))

    def _probe_growth(self):
        rng = np.random.default_rng(_GROWTH_PROBE_SEED)
        if self.kind == "user-table":
            yg, zg, _ = self.table
            ys = rng.uniform(yg[0], yg[-1], _GROWTH_PROBE_COUNT)
            zs = rng.uniform(zg[0], zg[-1], _GROWTH_PROBE_COUNT)
        else:
            ys = rng.uniform(-20.0, 20.0, _GROWTH_PROBE_COUNT)
            zs = rng.uniform(-20.0, 20.0, _GROWTH_PROBE_COUNT)
        vals = np.abs(self.value(ys, zs))
        bound = self.growth_constant * (1.0 + np.abs(ys) + np.abs(zs))
        slack = 1e-12 * (1.0 + bound)
        if np.any(vals > bound + slack):
            k = int(np.argmax(vals - bound))
            raise InvalidConfigError(
                f"declared growth constant {self.growth_constant} violated at "
                f"y={ys[k]:.6g}, z={zs[k]:.6g}: |f|={vals[k]:.6g} > {bound[k]:.6g}"
            )

    # --- catalog ---------------------------------------------------------

    @classmethod
    def linear(cls, constant, state, hysteresis, growth_constant=None, lipschitz_constant=None):
        """f(y, z) = constant + state*y + hysteresis*z."""
        return cls("linear", (constant, state, hysteresis),
                   growth_constant, lipschitz_constant)

    @classmethod
    def saturating(cls, state_amplitude, state_rate, hysteresis_amplitude,
                   hysteresis_rate, growth_constant=None, lipschitz_constant=None):
        """f(y, z) = a1*tanh(r1*y) + a2*tanh(r2*z)."""
        return cls("saturating",
                   (state_amplitude, state_rate, hysteresis_amplitude, hysteresis_rate),
                   growth_constant, lipschitz_constant)

    @classmethod
    def logistic_capped(cls, rate, capacity, cap, hysteresis,
                        growth_constant=None, lipschitz_constant=None):
        """f(y, z) = clip(rate*y*(1 - y/capacity), -cap, cap) + hysteresis*z."""
        return cls("logistic-capped", (rate, capacity, cap, hysteresis),
                   growth_constant, lipschitz_constant)

    @classmethod
    def from_table(cls, y_grid, z_grid, values, growth_constant=None, lipschitz_constant=None):
        """Bilinear interpolation of tabulated f values; derivatives are approximate."""
        return cls("user-table", (), growth_constant, lipschitz_constant,
                   table=(np.asarray(y_grid, dtype=float),
                          np.asarray(z_grid, dtype=float),
                          np.asarray(values, dtype=float)))

    @property
    def derivative_is_exact(self):
        return self.kind != "user-table"

    def _table_value(self, y, z, what="reaction"):
        yg, zg, vals = self.table
        y = np.asarray(y, dtype=float)
        z = np.broadcast_to(np.asarray(z, dtype=float), y.shape)
        if np.any(y < yg[0]) or np.any(y > yg[-1]) or np.any(z < zg[0]) or np.any(z > zg[-1]):
            raise NonsmoothPointError(
                f"{what} probed outside the table domain "
                f"[{yg[0]}, {yg[-1]}] x [{zg[0]}, {zg[-1]}]"
            )
        iy = np.clip(np.searchsorted(yg, y, side="right") - 1, 0, yg.size - 2)
        iz = np.clip(np.searchsorted(zg, z, side="right") - 1, 0, zg.size - 2)
        ty = (y - yg[iy]) / (yg[iy + 1] - yg[iy])
        tz = (z - zg[iz]) / (zg[iz + 1] - zg[iz])
        v00 = vals[iy, iz]
        v10 = vals[iy + 1, iz]
        v01 = vals[iy, iz + 1]
        v11 = vals[iy + 1, iz + 1]
        return (v00 * (1 - ty) * (1 - tz) + v10 * ty * (1 - tz)
                + v01 * (1 - ty) * tz + v11 * ty * tz)

    def value(self, y, z):
        """f(y, z) elementwise over ``y`` with scalar (or broadcast) ``z``."""
        y = np.asarray(y, dtype=float)
        p = self.params
        if self.kind == "linear":
            return p[0] + p[1] * y + p[2] * np.asarray(z)
        if self.kind == "saturating":
            return p[0] * np.tanh(p[1] * y) + p[2] * np.tanh(p[3] * np.asarray(z))
        if self.kind == "logistic-capped":
            rate, capacity, cap, cz = p
            inner = rate * y * (1.0 - y / capacity)
            return np.clip(inner, -cap, cap) + cz * np.asarray(z)
        return self._table_value(y, z)

    def directional(self, y, z, dy, dz):
        """One-sided directional derivative f'[(y, z); (dy, dz)] elementwise.

        Analytic for catalog kinds (right-sided at the logistic cap);
        central finite differences with step 1e-6*(1+|y|+|z|) for tables.
        """
        y = np.asarray(y, dtype=float)
        dy = np.asarray(dy, dtype=float)
        p = self.params
        if self.kind == "linear":
            return p[1] * dy + p[2] * np.asarray(dz)
        if self.kind == "saturating":
            ty = np.tanh(p[1] * y)
            tz = np.tanh(p[3] * np.asarray(z))
            return p[0] * p[1] * (1.0 - ty * ty) * dy + p[2] * p[3] * (1.0 - tz * tz) * np.asarray(dz)
        if self.kind == "logistic-capped":
            rate, capacity, cap, cz = p
            inner = rate * y * (1.0 - y / capacity)
            d_inner = rate * (1.0 - 2.0 * y / capacity) * dy
            return _clip_directional(inner, cap, d_inner) + cz * np.asarray(dz)
        # user-table: symmetric quotient along the direction, scale-normalized
        z = np.broadcast_to(np.asarray(z, dtype=float), y.shape)
        dz = np.broadcast_to(np.asarray(dz, dtype=float), y.shape)
        scale = np.maximum(np.abs(dy), np.abs(dz))
        safe = np.where(scale > 0, scale, 1.0)
        step = 1e-6 * (1.0 + np.abs(y) + np.abs(z)) / safe
        f_plus = self._table_value(y + step * dy, z + step * dz, "derivative")
        f_minus = self._table_value(y - step * dy, z - step * dz, "derivative")
        quot = (f_plus - f_minus) / (2.0 * step)
        return np.where(scale > 0, quot, 0.0)


@dataclass(frozen=True)
class SolverConfig:
    """Time-stepping configuration shared by state and sensitivity solves."""

    dt: float
    t_final: float
    scheme: str = "imex-euler"
    slice_length: float = None   # Picard slice in time units; None = whole interval
    picard_tol: float = 1e-10
    picard_max_iters: int = 60

    def __post_init__(self):
        if self.scheme not in ("imex-euler", "picard-sliced"):
            raise InvalidConfigError(
                f"scheme must be 'imex-euler' or 'picard-sliced', got {self.scheme!r}"
            )
        dt = float(self.dt)
        t_final = float(self.t_final)
        if not math.isfinite(dt) or dt <= 0:
            raise InvalidConfigError(f"dt must be positive, got {dt}")
        if not math.isfinite(t_final) or t_final < dt:
            raise InvalidConfigError("t_final must be at least one step")
        n = t_final / dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise InvalidConfigError(
                f"t_final={t_final} must be an integer multiple of dt={dt}"
            )
        object.__setattr__(self, "dt", dt)
        object.__setattr__(self, "t_final", t_final)
        if self.slice_length is not None:
            s = float(self.slice_length)
            k = s / dt
            if not math.isfinite(s) or s <= 0 or abs(k - round(k)) > 1e-9 * max(1.0, k):
                raise InvalidConfigError(
                    f"slice_length={self.slice_length} must be a positive multiple of dt"
                )
            object.__setattr__(self, "slice_length", s)
        if self.picard_tol <= 0:
            raise InvalidConfigError("picard_tol must be positive")
        if self.picard_max_iters < 1:
            raise InvalidConfigError("picard_max_iters must be at least 1")

    @property
    def n_steps(self):
        return int(round(self.t_final / self.dt))

    @property
    def slice_steps(self):
        if self.slice_length is None:
            return self.n_steps
        return int(round(self.slice_length / self.dt))

    def times(self):
        return self.dt * np.arange(self.n_steps + 1)


@dataclass
class Trajectory:
    """Discrete state path: fields y_k, hysteresis output z, and the source.

    ``stop_offsets`` stores the internal offset state w_k of the stop
    recursion at every step; the sensitivity solver replays branch decisions
    from these exact values.
    """

    times: np.ndarray
    states: np.ndarray        # (N+1, m, n_nodes)
    stop: PiecewiseLinearSignal
    s_values: np.ndarray      # v_k = S y_k
    stop_offsets: np.ndarray  # w_k = z_k - v_k as carried by the recursion
    source: np.ndarray        # (N+1, m, n_nodes)
    hyst_cfg: HysteresisConfig
    picard_iterations: list = field(default_factory=list)  # per-slice sweep counts


@dataclass(frozen=True)
class BoundednessReport:
    max_state_norm: float
    source_norm: float   # sqrt(sum_k dt |u_k|_quad^2)
    ratio: float         # max_state_norm / (1 + source_norm)


def _check_source(disc, solver, u):
    u = np.asarray(u, dtype=float)
    expected = (solver.n_steps + 1, disc.n_components, disc.n_nodes)
    if u.shape != expected:
        raise GridMismatchError(f"source must have shape {expected}, got {u.shape}")
    return u


def _factorize(disc, dt):
    return [spla.splu(implicit_step_matrix(disc, j, dt)) for j in range(disc.n_components)]


def _imex_step(disc, lus, dt, y, rhs_field):
    """One implicit solve per component of (D + dt L) y+ = D (y + dt rhs)."""
    out = np.zeros_like(y)
    for j, comp in enumerate(disc.components):
        act = comp.active
        rhs = comp.rel_weights * (y[j, act] + dt * rhs_field[j, act])
        out[j, act] = lus[j].solve(rhs)
    return out


def _guard(y, k, t):
    if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > BLOWUP_GUARD:
        peak = np.max(np.abs(y[np.isfinite(y)])) if np.any(np.isfinite(y)) else math.inf
        raise BlowupError(
            f"state blew up at step {k} (t={t:.6g}): magnitude {peak:.3e} "
            f"exceeds guard {BLOWUP_GUARD:.1e} or is not finite"
        )


def solve_state(disc, sfun, reaction, hyst_cfg, u, solver) -> Trajectory:
    """Run the coupled solve from y_0 = 0 and return the discrete trajectory."""
    u = _check_source(disc, solver, u)
    times = solver.times()
    n_steps = solver.n_steps
    m, n_nodes = disc.n_components, disc.n_nodes

    states = np.zeros((n_steps + 1, m, n_nodes))
    s_values = np.zeros(n_steps + 1)
    zs = np.empty(n_steps + 1)
    offsets = np.empty(n_steps + 1)

    cursor = StopCursor(hyst_cfg, 0.0)  # v_0 = S y_0 = 0
    zs[0] = cursor.z
    offsets[0] = cursor.w
    lus = _factorize(disc, solver.dt)
    picard_log = []

    if solver.scheme == "imex-euler":
        y = states[0]
        for k in range(n_steps):
            rhs = reaction.value(y, zs[k]) + u[k]
            y = _imex_step(disc, lus, solver.dt, y, rhs)
            _guard(y, k + 1, times[k + 1])
            states[k + 1] = y
            s_values[k + 1] = evaluate_S(disc, sfun, y)
            zs[k + 1] = cursor.advance(s_values[k + 1])
            offsets[k + 1] = cursor.w
    else:
        step = 0
        slice_steps = solver.slice_steps
        while step < n_steps:
            ns = min(slice_steps, n_steps - step)
            y_slice, z_slice, off_slice, sv_slice, ratios = picard_slice_iterate(
                disc, sfun, reaction, cursor,
                states[step], u[step:step + ns + 1],
                solver.dt, solver.picard_tol, solver.picard_max_iters,
                lus=lus,
            )
            states[step + 1:step + ns + 1] = y_slice[1:]
            zs[step + 1:step + ns + 1] = z_slice[1:]
            offsets[step + 1:step + ns + 1] = off_slice[1:]
            s_values[step + 1:step + ns + 1] = sv_slice[1:]
            picard_log.append(len(ratios) + 1)
            step += ns
        for k in range(n_steps + 1):
            _guard(states[k], k, times[k])

    return Trajectory(
        times=times,
        states=states,
        stop=PiecewiseLinearSignal(times, zs),
        s_values=s_values,
        stop_offsets=offsets,
        source=u,
        hyst_cfg=hyst_cfg,
        picard_iterations=picard_log,
    )


def picard_slice_iterate(disc, sfun, reaction, cursor, y_start, u_slice,
                         dt, tol, max_iters, lus=None):
    """Fixed-point sweeps of the backward-Euler recursion over one slice.

    ``cursor`` is the stop recursion state at the slice start and is
    advanced to the slice end on return.  ``u_slice`` holds the source
    samples at the slice's grid points (start included).  Returns the slice
    states (start included), the stop values, the stop offsets, the
    S-samples, and the per-sweep contraction ratios.  Raises the
    non-contraction error if successive sweeps still differ by more than
    ``tol`` in max-over-steps quadrature norm after ``max_iters`` sweeps.
    """
    u_slice = np.asarray(u_slice, dtype=float)
    ns = u_slice.shape[0] - 1
    if ns < 1:
        raise InvalidConfigError("slice needs at least one step")
    if lus is None:
        lus = _factorize(disc, dt)

    m, n_nodes = disc.n_components, disc.n_nodes
    y_old = np.broadcast_to(y_start, (ns + 1, m, n_nodes)).copy()
    start_state = (cursor.w, cursor.v, cursor.z)

    def replay(ys):
        cur = StopCursor.restore(cursor.cfg, *start_state)
        z = np.empty(ns + 1)
        off = np.empty(ns + 1)
        sv = np.empty(ns + 1)
        z[0], off[0], sv[0] = cur.z, cur.w, cur.v
        for i in range(1, ns + 1):
            sv[i] = evaluate_S(disc, sfun, ys[i])
            z[i] = cur.advance(sv[i])
            off[i] = cur.w
        return z, off, sv, cur

    diffs = []
    z_old, off_old, sv_old, _ = replay(y_old)
    for _ in range(max_iters):
        y_new = np.empty_like(y_old)
        y_new[0] = y_start
        for i in range(ns):
            rhs = reaction.value(y_old[i], z_old[i]) + u_slice[i]
            y_new[i + 1] = _imex_step(disc, lus, dt, y_new[i], rhs)
        if not np.all(np.isfinite(y_new)) or np.max(np.abs(y_new)) > BLOWUP_GUARD:
            raise BlowupError("Picard sweep produced a non-finite or huge iterate")
        diff = max(quad_norm(disc, y_new[i] - y_old[i]) for i in range(ns + 1))
        diffs.append(diff)
        y_old = y_new
        z_old, off_old, sv_old, end_cursor = replay(y_old)
        if diff <= tol:
            cursor.w, cursor.v, cursor.z = end_cursor.w, end_cursor.v, end_cursor.z
            ratios = [diffs[i + 1] / diffs[i] for i in range(len(diffs) - 1) if diffs[i] > 0]
            return y_old, z_old, off_old, sv_old, ratios
    raise NonContractionError(
        f"Picard sweeps did not contract below {tol:.3e} within {max_iters} "
        f"iterations (last update {diffs[-1]:.3e}); reduce slice_length "
        f"(currently {ns} steps) and retry"
    )


def boundedness_report(disc, traj: Trajectory, solver: SolverConfig) -> BoundednessReport:
    """Ratio of the peak state norm to 1 + the source's time-quadrature norm."""
    dt = solver.dt
    max_state = max(quad_norm(disc, y) for y in traj.states)
    src_sq = sum(quad_norm(disc, uk) ** 2 for uk in traj.source)
    src_norm = math.sqrt(dt * src_sq)
    return BoundednessReport(
        max_state_norm=float(max_state),
        source_norm=float(src_norm),
        ratio=float(max_state / (1.0 + src_norm)),
    )
