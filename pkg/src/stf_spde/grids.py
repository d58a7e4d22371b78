"""Uniform 1D Dirichlet grid and the discrete function-space operations.

Everything lives on the interior nodes x_j = j*h, j = 1..N, of a uniform
grid on (0, 1) with h = 1/(N+1) and zero boundary values. The discrete
norms are the h-weighted analogues of the continuum ones:

    |u|_L2      = sqrt(h * sum u_j^2)
    |u|_Lp      = (h * sum |u_j|^p)^(1/p)
    |u|_V_H1    = sqrt(sum over edges h * ((u_{j+1}-u_j)/h)^2), boundary zeros
    |u|_Hminus1 = sqrt(h * sum u_j * ((-Lap_h)^{-1} u)_j)

with Lap_h the 3-point Laplacian (u_{j-1} - 2u_j + u_{j+1})/h^2. Two norm
triples are supported: the heat triple (V = H1_0, H = L2, V* = H^-1) and
the porous triple with exponent m (V = L^{m+1}, H = H^-1,
V* = L^{(m+1)/m}), whose duality pairing routes through (-Lap_h)^{-1}.

All operations are pure functions; Field values are read-only arrays.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

__all__ = [
    "SpatialGrid",
    "Field",
    "TripleKind",
    "discrete_laplacian",
    "inverse_neg_laplacian",
    "laplacian_eigenvalue",
    "norm",
    "signed_power",
    "duality_pairing",
    "sine_field",
]


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform grid on (0, 1) with Dirichlet boundary, interior nodes only."""

    n_interior: int

    def __post_init__(self) -> None:
        if self.n_interior < 2:
            raise ValueError(f"n_interior must be >= 2, got {self.n_interior}")

    @property
    def h(self) -> float:
        return 1.0 / (self.n_interior + 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.h * np.arange(1, self.n_interior + 1)


@dataclass(frozen=True, eq=False)
class Field:
    """Real-valued function on the interior nodes of a SpatialGrid."""

    grid: SpatialGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.n_interior,):
            raise ValueError(
                f"field length {vals.shape} does not match grid "
                f"n_interior={self.grid.n_interior}"
            )
        vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class TripleKind:
    """Which Gelfand-triple norms apply: 'heat' or 'porous' (with exponent m)."""

    name: str
    m: int = 2

    def __post_init__(self) -> None:
        if self.name not in ("heat", "porous"):
            raise ValueError(f"unknown triple kind {self.name!r}")
        if self.name == "porous" and self.m < 1:
            raise ValueError(f"porous triple needs m >= 1, got m={self.m}")

    @classmethod
    def heat(cls) -> "TripleKind":
        return cls("heat")

    @classmethod
    def porous(cls, m: int) -> "TripleKind":
        return cls("porous", m)

    def v_norm(self, u: "Field") -> float:
        """|u|_V: H1_0 seminorm (heat) or L^{m+1} (porous)."""
        if self.name == "heat":
            return norm(u, "V_H1")
        return norm(u, "Lp", p=self.m + 1)

    def h_norm(self, u: "Field") -> float:
        """|u|_H: L2 (heat) or H^-1 (porous)."""
        if self.name == "heat":
            return norm(u, "L2")
        return norm(u, "Hminus1")

    def vstar_norm(self, u: "Field") -> float:
        """|u|_V*: H^-1 (heat) or L^{(m+1)/m} (porous)."""
        if self.name == "heat":
            return norm(u, "Hminus1")
        return norm(u, "Lp", p=(self.m + 1) / self.m)


def _check_same_grid(a: Field, b: Field) -> None:
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")


def laplacian_values(grid: SpatialGrid, values: np.ndarray) -> np.ndarray:
    """3-point Dirichlet Laplacian applied to raw nodal values."""
    h2 = grid.h * grid.h
    out = -2.0 * values
    out[:-1] += values[1:]
    out[1:] += values[:-1]
    return out / h2


def discrete_laplacian(u: Field) -> Field:
    """Apply the 3-point Laplacian with zero Dirichlet boundary.

    Args:
        u: interior-node Field.

    Returns:
        Field with values (u_{j-1} - 2 u_j + u_{j+1}) / h^2, where the
        off-grid neighbors are zero.
    """
    return Field(u.grid, laplacian_values(u.grid, np.asarray(u.values)))


@functools.lru_cache(maxsize=32)
def _neg_lap_cholesky(n_interior: int) -> np.ndarray:
    """Banded Cholesky factor of -Lap_h (SPD tridiagonal), upper form."""
    h2 = 1.0 / (n_interior + 1) ** 2
    ab = np.empty((2, n_interior))
    ab[0] = -1.0 / h2  # superdiagonal
    ab[0, 0] = 0.0
    ab[1] = 2.0 / h2  # diagonal
    return cholesky_banded(ab)


def inv_neg_laplacian_values(grid: SpatialGrid, values: np.ndarray) -> np.ndarray:
    """Solve (-Lap_h) u = f for raw nodal values.

    One step of iterative refinement keeps the residual near machine level
    even for smooth f aligned with the lowest mode, where the plain solve's
    eps * cond(A) residual bound would bite at larger grids.
    """
    cb = _neg_lap_cholesky(grid.n_interior)
    u = cho_solve_banded((cb, False), values)
    resid = values + laplacian_values(grid, u)
    u += cho_solve_banded((cb, False), resid)
    return u


def inverse_neg_laplacian(f: Field) -> Field:
    """Solve (-Lap_h) u = f on the Dirichlet grid.

    Args:
        f: right-hand-side Field.

    Returns:
        Field u with discrete_laplacian(u) = -f to roughly machine
        precision (max-norm, relative to |f|); contract tolerance 1e-12.
    """
    return Field(f.grid, inv_neg_laplacian_values(f.grid, np.asarray(f.values)))


def laplacian_eigenvalue(grid: SpatialGrid, k: int) -> float:
    """k-th eigenvalue mu_k = (4/h^2) sin^2(k pi h / 2) of -Lap_h."""
    if not 1 <= k <= grid.n_interior:
        raise ValueError(f"mode k must be in 1..{grid.n_interior}, got {k}")
    h = grid.h
    return (4.0 / (h * h)) * np.sin(0.5 * k * np.pi * h) ** 2


def sine_field(grid: SpatialGrid, k: int, amplitude: float = 1.0) -> Field:
    """Field amplitude * sin(k pi x) sampled at the interior nodes."""
    return Field(grid, amplitude * np.sin(k * np.pi * grid.nodes))


def norm_values(grid: SpatialGrid, values: np.ndarray, kind: str, p: float | None = None) -> float:
    """Discrete norm of raw nodal values; see module docstring for kinds."""
    h = grid.h
    if kind == "L2":
        return float(np.sqrt(h * np.dot(values, values)))
    if kind == "Lp":
        if p is None:
            raise ValueError("Lp norm needs the exponent p")
        if p < 1:
            raise ValueError(f"Lp norm needs p >= 1, got {p}")
        return float((h * np.sum(np.abs(values) ** p)) ** (1.0 / p))
    if kind == "V_H1":
        # sum over the N+1 edges, with zero boundary values at both ends
        diffs = np.diff(values, prepend=0.0, append=0.0)
        return float(np.sqrt(np.dot(diffs, diffs) / h))
    if kind == "Hminus1":
        w = inv_neg_laplacian_values(grid, values)
        val = h * np.dot(values, w)
        # the quadratic form is positive; tiny negatives are roundoff
        return float(np.sqrt(max(val, 0.0)))
    raise ValueError(f"unknown norm kind {kind!r}")


def norm(u: Field, kind: str, p: float | None = None) -> float:
    """Discrete norm of a Field.

    Args:
        u: the Field.
        kind: one of "L2", "Lp", "V_H1", "Hminus1".
        p: exponent, required for kind "Lp".

    Returns:
        The h-weighted norm value (see module docstring).
    """
    return norm_values(u.grid, np.asarray(u.values), kind, p)


def signed_power_values(values: np.ndarray, alpha: float) -> np.ndarray:
    """|u|^(alpha-1) u on raw values, with 0 mapped to 0."""
    if alpha <= 0:
        raise ValueError(f"signed power needs alpha > 0, got {alpha}")
    return np.sign(values) * np.abs(values) ** alpha


def signed_power(u: Field, alpha: float) -> Field:
    """Odd power u^[alpha] = |u|^(alpha-1) u, applied nodewise."""
    return Field(u.grid, signed_power_values(np.asarray(u.values), alpha))


def duality_pairing(f: Field, g: Field, triple: TripleKind) -> float:
    """Duality pairing <f, g> between V* and V for the given triple.

    For the heat triple this is the plain L2 inner product
    h * sum f_j g_j. For the porous triple, where H = H^-1 is the pivot
    space, it is h * sum ((-Lap_h)^{-1} f)_j g_j.

    Args:
        f: element of V* (heat: H^-1 realized on nodes; porous: L^{(m+1)/m}).
        g: element of V.
        triple: which Gelfand triple's pairing to use.

    Returns:
        The pairing value.
    """
    _check_same_grid(f, g)
    h = f.grid.h
    fv = np.asarray(f.values)
    gv = np.asarray(g.values)
    if triple.name == "heat":
        return float(h * np.dot(fv, gv))
    w = inv_neg_laplacian_values(f.grid, fv)
    return float(h * np.dot(w, gv))
