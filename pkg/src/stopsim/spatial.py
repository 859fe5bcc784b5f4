"""Structured-grid discretization of the diffusion operator, quadrature, and
the semigroup/fractional-power diagnostic.

Grids are tensor products on an interval or a rectangle with second-order
central differences.  Per component the assembly stores the symmetric
half-cell-weighted form L (interior rows d*(-1, 2, -1)/h^2, Neumann boundary
rows d*(1, -1)/h^2) together with the relative trapezoid weights D
(1/2 at boundary nodes, 1 inside, tensorized in 2D).  The realized generator
is D^{-1} L: its boundary rows are exactly the ghost-node reflection stencil
2d*(1, -1)/h^2, and the implicit step solves (D + dt*L) y+ = D y, which is
the backward-Euler step for that generator.  Keeping L symmetric makes the
spectrum a real generalized symmetric eigenproblem and gives 1^T L = 0 for
pure-Neumann components, so the quadrature mass of an implicit step is
conserved to solver precision.

Dirichlet sides are eliminated: fields live on the full grid with Dirichlet
nodes pinned to zero, and each component's operator acts on its active
(non-Dirichlet) nodes.  A 2D corner between a Dirichlet and a Neumann side
is Dirichlet.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import eigh

from .errors import (
    GridMismatchError,
    InvalidConfigError,
    NumericalFailureError,
    UnsupportedConfigurationError,
)

__all__ = [
    "DomainSpec",
    "BoundarySides",
    "SpatialDiscretization",
    "SFunctional",
    "assemble",
    "apply_semigroup_step",
    "fractional_power_diagnostic",
    "FractionalPowerReport",
    "evaluate_S",
    "s_operator_norm",
    "quad_norm",
    "quad_inner",
]

_SIDES_1D = ("left", "right")
_SIDES_2D = ("left", "right", "bottom", "top")
_LABELS = ("dirichlet", "neumann")

SOLVER_RESIDUAL_TOL = 1e-10  # relative residual bound for implicit solves
DENSE_EIG_LIMIT = 500  # dense eigendecompositions refused above this size


@dataclass(frozen=True)
class DomainSpec:
    """Interval [0, L] or rectangle [0, L1] x [0, L2] with nodes per axis."""

    dimension: int
    extent: tuple
    resolution: tuple

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise InvalidConfigError(f"dimension must be 1 or 2, got {self.dimension}")
        extent = tuple(float(e) for e in np.atleast_1d(np.asarray(self.extent, dtype=float)))
        resolution = tuple(int(r) for r in np.atleast_1d(self.resolution))
        if len(extent) != self.dimension or len(resolution) != self.dimension:
            raise InvalidConfigError(
                "extent and resolution must have one entry per dimension"
            )
        if any(not np.isfinite(e) or e <= 0 for e in extent):
            raise InvalidConfigError("extents must be positive")
        if any(r < 3 for r in resolution):
            raise InvalidConfigError("resolution must be at least 3 nodes per axis")
        object.__setattr__(self, "extent", extent)
        object.__setattr__(self, "resolution", resolution)

    @property
    def spacings(self):
        return tuple(L / (n - 1) for L, n in zip(self.extent, self.resolution))

    @property
    def n_nodes(self):
        return int(np.prod(self.resolution))


@dataclass(frozen=True)
class BoundarySides:
    """Dirichlet/Neumann label per side of the box, for one component."""

    left: str
    right: str
    bottom: str | None = None
    top: str | None = None

    def __post_init__(self):
        for side in ("left", "right", "bottom", "top"):
            label = getattr(self, side)
            if label is not None and label not in _LABELS:
                raise InvalidConfigError(
                    f"boundary label for {side!r} must be one of {_LABELS}, got {label!r}"
                )

    def labels(self, dimension):
        sides = _SIDES_1D if dimension == 1 else _SIDES_2D
        out = {}
        for side in sides:
            label = getattr(self, side)
            if label is None:
                raise InvalidConfigError(f"missing boundary label for side {side!r}")
            out[side] = label
        return out


@dataclass(frozen=True)
class ComponentOperator:
    """Assembled operator data for one component, restricted to active nodes."""

    active: np.ndarray          # full-grid indices of non-Dirichlet nodes
    operator: sp.csr_matrix     # symmetric PSD form L on active nodes
    rel_weights: np.ndarray     # relative trapezoid weights D on active nodes
    dirichlet_mask: np.ndarray  # full-grid boolean
    neumann_nodes: np.ndarray   # full-grid indices of Neumann boundary nodes
    surface_weights: np.ndarray  # boundary quadrature weight per Neumann node


def _axis_stiffness(n: int) -> sp.csr_matrix:
    """Unit-spacing 1D stiffness: rows (-1, 2, -1), ends (1, -1); symmetric."""
    main = np.full(n, 2.0)
    main[0] = main[-1] = 1.0
    off = np.full(n - 1, -1.0)
    return sp.diags_array([off, main, off], offsets=[-1, 0, 1]).tocsr()


def _axis_rel_weights(n: int) -> np.ndarray:
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    return w


def _boundary_node_sets(domain: DomainSpec):
    """Full-grid node index array per side."""
    if domain.dimension == 1:
        (n,) = domain.resolution
        return {"left": np.array([0]), "right": np.array([n - 1])}
    nx, ny = domain.resolution
    ix, iy = np.arange(nx), np.arange(ny)
    return {
        "left": 0 * ny + iy,                # ix = 0
        "right": (nx - 1) * ny + iy,        # ix = nx-1
        "bottom": ix * ny + 0,              # iy = 0
        "top": ix * ny + (ny - 1),          # iy = ny-1
    }


def _surface_weight_arrays(domain: DomainSpec):
    """1D boundary quadrature weight per node, per side (1.0 for interval ends)."""
    if domain.dimension == 1:
        return {"left": np.array([1.0]), "right": np.array([1.0])}
    nx, ny = domain.resolution
    hx, hy = domain.spacings
    wx = _axis_rel_weights(nx) * hx
    wy = _axis_rel_weights(ny) * hy
    return {"left": wy, "right": wy, "bottom": wx, "top": wx}


@dataclass(frozen=True)
class SpatialDiscretization:
    domain: DomainSpec
    boundaries: tuple
    diffusion: tuple
    coords: np.ndarray       # (n_nodes, dimension) node coordinates
    quadrature: np.ndarray   # (n_nodes,) trapezoid weights
    cell_volume: float
    components: tuple

    @property
    def n_components(self):
        return len(self.components)

    @property
    def n_nodes(self):
        return self.quadrature.size

    def zero_field(self):
        return np.zeros((self.n_components, self.n_nodes))


def assemble(domain: DomainSpec, boundaries, diffusion) -> SpatialDiscretization:
    """Assemble per-component operators, quadrature, and boundary data.

    ``boundaries`` is one BoundarySides per component, ``diffusion`` the
    matching positive coefficients.
    """
    boundaries = tuple(boundaries)
    diffusion = tuple(float(d) for d in np.atleast_1d(np.asarray(diffusion, dtype=float)))
    if len(boundaries) != len(diffusion):
        raise InvalidConfigError(
            f"got {len(boundaries)} boundary specs but {len(diffusion)} diffusion coefficients"
        )
    if not boundaries:
        raise InvalidConfigError("need at least one component")
    if any(not np.isfinite(d) or d <= 0 for d in diffusion):
        raise InvalidConfigError("diffusion coefficients must be positive")

    if domain.dimension == 1:
        (n,) = domain.resolution
        (h,) = domain.spacings
        coords = (np.arange(n) * h).reshape(-1, 1)
        rel = _axis_rel_weights(n)
        quadrature = rel * h
        cell_volume = h
        base_L = _axis_stiffness(n) / (h * h)  # K/h divided by cell volume h
    else:
        nx, ny = domain.resolution
        hx, hy = domain.spacings
        x = np.arange(nx) * hx
        y = np.arange(ny) * hy
        xx, yy = np.meshgrid(x, y, indexing="ij")
        coords = np.column_stack([xx.ravel(), yy.ravel()])
        rx, ry = _axis_rel_weights(nx), _axis_rel_weights(ny)
        rel = np.outer(rx, ry).ravel()
        cell_volume = hx * hy
        quadrature = rel * cell_volume
        lx = _axis_stiffness(nx) / (hx * hx)
        ly = _axis_stiffness(ny) / (hy * hy)
        base_L = (
            sp.kron(lx, sp.diags_array(ry), format="csr")
            + sp.kron(sp.diags_array(rx), ly, format="csr")
        ).tocsr()

    side_nodes = _boundary_node_sets(domain)
    side_weights = _surface_weight_arrays(domain)

    components = []
    for j, (sides, d) in enumerate(zip(boundaries, diffusion)):
        labels = sides.labels(domain.dimension)
        dirichlet_mask = np.zeros(domain.n_nodes, dtype=bool)
        for side, label in labels.items():
            if label == "dirichlet":
                dirichlet_mask[side_nodes[side]] = True
        active = np.flatnonzero(~dirichlet_mask)

        # Neumann boundary nodes and their surface weights; a node on two
        # Neumann sides (2D corner) accumulates both edge weights
        surface = np.zeros(domain.n_nodes)
        on_neumann = np.zeros(domain.n_nodes, dtype=bool)
        for side, label in labels.items():
            if label == "neumann":
                idx = side_nodes[side]
                surface[idx] += side_weights[side]
                on_neumann[idx] = True
        on_neumann &= ~dirichlet_mask
        neumann_nodes = np.flatnonzero(on_neumann)

        L = (d * base_L)[active][:, active].tocsr()
        components.append(
            ComponentOperator(
                active=active,
                operator=L,
                rel_weights=rel[active].copy(),
                dirichlet_mask=dirichlet_mask,
                neumann_nodes=neumann_nodes,
                surface_weights=surface[neumann_nodes].copy(),
            )
        )

    return SpatialDiscretization(
        domain=domain,
        boundaries=boundaries,
        diffusion=diffusion,
        coords=coords,
        quadrature=quadrature,
        cell_volume=cell_volume,
        components=tuple(components),
    )


def _check_field(disc: SpatialDiscretization, y, name="field"):
    y = np.asarray(y, dtype=float)
    if y.shape != (disc.n_components, disc.n_nodes):
        raise GridMismatchError(
            f"{name} must have shape ({disc.n_components}, {disc.n_nodes}), got {y.shape}"
        )
    return y


def quad_norm(disc: SpatialDiscretization, y) -> float:
    """Quadrature-weighted L2 norm of an (m, n_nodes) field."""
    y = _check_field(disc, y)
    return float(np.sqrt(np.einsum("ji,ji,i->", y, y, disc.quadrature)))


def quad_inner(disc: SpatialDiscretization, y1, y2) -> float:
    y1 = _check_field(disc, y1)
    y2 = _check_field(disc, y2)
    return float(np.einsum("ji,ji,i->", y1, y2, disc.quadrature))


@dataclass(frozen=True)
class SFunctional:
    """Quadrature-weighted linear functional S y = sum_j sum_i q_i w_ji y_ji."""

    weight: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=float)
        if w.ndim != 2:
            raise InvalidConfigError("S weight must be a (components, nodes) array")
        if not np.all(np.isfinite(w)):
            raise InvalidConfigError("S weight must be finite")
        if not np.any(w != 0.0):
            raise InvalidConfigError("S weight must not be identically zero")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weight", w)


def evaluate_S(disc: SpatialDiscretization, sfun: SFunctional, y) -> float:
    y = _check_field(disc, y)
    if sfun.weight.shape != y.shape:
        raise GridMismatchError(
            f"S weight shape {sfun.weight.shape} does not match field shape {y.shape}"
        )
    return float(np.einsum("ji,ji,i->", sfun.weight, y, disc.quadrature))


def s_operator_norm(disc: SpatialDiscretization, sfun: SFunctional) -> float:
    """Operator norm of S against the quadrature norm (Cauchy-Schwarz is tight)."""
    w = _check_field(disc, sfun.weight, "S weight")
    return float(np.sqrt(np.einsum("ji,ji,i->", w, w, disc.quadrature)))


def implicit_step_matrix(disc: SpatialDiscretization, j: int, dt: float) -> sp.csc_matrix:
    comp = disc.components[j]
    return (sp.diags_array(comp.rel_weights) + dt * comp.operator).tocsc()


def apply_semigroup_step(disc: SpatialDiscretization, y, dt: float):
    """One backward-Euler semigroup step: solve (D + dt L) y+ = D y per component.

    Dirichlet nodes of each component are pinned to zero in the output.
    Raises a numerical-failure error if any solve's relative residual
    exceeds the module tolerance.
    """
    if not np.isfinite(dt) or dt <= 0:
        raise InvalidConfigError(f"dt must be positive, got {dt}")
    y = _check_field(disc, y)
    out = np.zeros_like(y)
    for j, comp in enumerate(disc.components):
        rhs = comp.rel_weights * y[j, comp.active]
        mat = implicit_step_matrix(disc, j, dt)
        x = spla.spsolve(mat, rhs)
        denom = float(np.linalg.norm(rhs))
        residual = float(np.linalg.norm(mat @ x - rhs)) / (denom if denom > 0 else 1.0)
        if not np.isfinite(residual) or residual > SOLVER_RESIDUAL_TOL:
            raise NumericalFailureError(
                f"implicit step solve failed for component {j}", residual=residual
            )
        out[j, comp.active] = x
    return out


def component_spectrum(disc: SpatialDiscretization, j: int = 0):
    """Generalized symmetric eigenvalues/vectors of (L, D) on active nodes.

    These are the eigenvalues of the realized generator D^{-1} L; real and
    nonnegative since L is symmetric PSD and D is positive diagonal.
    """
    comp = disc.components[j]
    n = comp.active.size
    if n > DENSE_EIG_LIMIT:
        raise UnsupportedConfigurationError(
            f"dense eigendecomposition limited to {DENSE_EIG_LIMIT} nodes, got {n}"
        )
    L = comp.operator
    asym = abs(L - L.T)
    if asym.nnz and asym.max() > 0:
        raise UnsupportedConfigurationError("component operator is not symmetric")
    lam, vec = eigh(L.toarray(), np.diag(comp.rel_weights))
    return np.maximum(lam, 0.0), vec


@dataclass(frozen=True)
class FractionalPowerReport:
    theta: float
    gamma: float
    t_grid: np.ndarray
    norms: np.ndarray      # ||(A+1)^theta exp(-A t)|| in the quadrature norm
    weighted: np.ndarray   # norms * t^theta * exp(-(1-gamma) t)
    sup_value: float
    t_at_sup: float

    @property
    def attained_interior(self):
        return self.t_grid[0] < self.t_at_sup < self.t_grid[-1]


def fractional_power_diagnostic(
    disc: SpatialDiscretization,
    theta: float,
    t_grid=None,
    component: int = 0,
    gamma: float = 0.5,
) -> FractionalPowerReport:
    """Spectral check of the smoothing bound for the analytic semigroup.

    Computes ||(A+1)^theta exp(-A t)|| over ``t_grid`` via the generalized
    eigendecomposition and reports the sup of norm * t^theta * exp(-(1-gamma) t).
    Finite and attained away from t -> 0 for a symmetric nonnegative operator.
    """
    theta = float(theta)
    if not 0.0 <= theta < 1.0:
        raise InvalidConfigError(f"theta must lie in [0, 1), got {theta}")
    if t_grid is None:
        t_grid = np.logspace(-3.0, 1.3, 400)
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size < 2 or not np.all(t_grid > 0):
        raise InvalidConfigError("t_grid must be a 1-D array of positive times")
    if not np.all(np.diff(t_grid) > 0):
        raise InvalidConfigError("t_grid must be strictly increasing")

    lam, _ = component_spectrum(disc, component)
    growth = np.power(lam + 1.0, theta)
    norms = np.array([float(np.max(growth * np.exp(-lam * t))) for t in t_grid])
    weighted = norms * t_grid**theta * np.exp(-(1.0 - gamma) * t_grid)
    k = int(np.argmax(weighted))
    return FractionalPowerReport(
        theta=theta,
        gamma=gamma,
        t_grid=t_grid,
        norms=norms,
        weighted=weighted,
        sup_value=float(weighted[k]),
        t_at_sup=float(t_grid[k]),
    )
