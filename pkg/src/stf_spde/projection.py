"""Backward block averaging of trajectories on dyadic time partitions.

A Trajectory samples a Field-valued path on a uniform mesh of [0, T] that
is nested in a dyadic partition with 2^n blocks. proj_shifted replaces the
path on each dyadic block by a constant: a prescribed seed field on block 0
and, on block k >= 1, the trapezoid average of the path over block k-1.
Averaging only ever looks backward, so the output on [0, t) is determined
by the input on [0, t] alone; this is the adaptedness property the
construction exists for.

Time regularity is measured by the discrete fractional Sobolev norm

    ( sum_k dt |u(t_k)|^p
      + sum_{i != j} dt^2 |u(t_i) - u(t_j)|^p / |t_i - t_j|^{1 + alpha p}
    )^{1/p}

with left Riemann sums over k, i, j = 0..n_steps-1 and the diagonal
excluded. haar_rate_experiment fits the decay of |proj_n(x) - x| in the
time-Lp norm against the level n for a family of trajectories.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded, solveh_banded

from .grids import Field, SpatialGrid, _neg_lap_cholesky, norm_values

__all__ = [
    "TimeGrid",
    "Trajectory",
    "HaarLevel",
    "RateFit",
    "proj_shifted",
    "smoothed_seed",
    "fractional_seminorm",
    "haar_rate_experiment",
    "trajectory_lp_norm",
    "trajectory_to_csv",
    "trajectory_from_csv",
]

_HILBERT_KINDS = ("L2", "V_H1", "Hminus1")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform mesh of [0, T] with n_steps steps, optionally dyadically nested."""

    n_steps: int
    T: float = 1.0
    dyadic_level: int | None = None

    def __post_init__(self) -> None:
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if not self.T > 0:
            raise ValueError(f"horizon T must be positive, got {self.T}")
        if self.dyadic_level is not None:
            if self.dyadic_level < 0:
                raise ValueError(f"dyadic_level must be >= 0, got {self.dyadic_level}")
            if self.n_steps % 2**self.dyadic_level != 0:
                raise ValueError(
                    f"n_steps={self.n_steps} is not divisible by "
                    f"2^{self.dyadic_level} blocks"
                )

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_steps + 1)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Field-valued path sampled at the n_steps + 1 nodes of a TimeGrid."""

    timegrid: TimeGrid
    fields: tuple[Field, ...]

    def __post_init__(self) -> None:
        fields = tuple(self.fields)
        if len(fields) != self.timegrid.n_steps + 1:
            raise ValueError(
                f"trajectory has {len(fields)} samples, timegrid expects "
                f"{self.timegrid.n_steps + 1}"
            )
        grid = fields[0].grid
        if any(f.grid != grid for f in fields):
            raise ValueError("trajectory fields live on different spatial grids")
        object.__setattr__(self, "fields", fields)

    @property
    def grid(self) -> SpatialGrid:
        return self.fields[0].grid

    def stacked(self) -> np.ndarray:
        """Samples as a writable (n_steps + 1, n_interior) matrix."""
        return np.array([f.values for f in self.fields])

    @classmethod
    def from_matrix(
        cls, timegrid: TimeGrid, grid: SpatialGrid, matrix: np.ndarray
    ) -> "Trajectory":
        matrix = np.asarray(matrix, dtype=float)
        if matrix.shape != (timegrid.n_steps + 1, grid.n_interior):
            raise ValueError(
                f"matrix shape {matrix.shape} does not match "
                f"({timegrid.n_steps + 1}, {grid.n_interior})"
            )
        return cls(timegrid, tuple(Field(grid, row) for row in matrix))

    @classmethod
    def constant(cls, timegrid: TimeGrid, value: Field) -> "Trajectory":
        return cls(timegrid, (value,) * (timegrid.n_steps + 1))


@dataclass(frozen=True)
class HaarLevel:
    """Dyadic depth n >= 1 together with the seed field used on block 0."""

    n: int
    seed_field: Field

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"dyadic level must be >= 1, got {self.n}")


def _block_averages(u: np.ndarray, blocks: int, s: int) -> np.ndarray:
    """Trapezoid average of the fine samples over each of the dyadic blocks."""
    avg = np.empty((blocks, u.shape[1]))
    for k in range(blocks):
        a, b = k * s, (k + 1) * s
        avg[k] = (0.5 * (u[a] + u[b]) + u[a + 1 : b].sum(axis=0)) / s
    return avg


def proj_shifted(traj: Trajectory, level: HaarLevel) -> Trajectory:
    """Replace each dyadic block by the previous block's trapezoid average.

    Block 0 of the output is the level's seed field; block k >= 1 is the
    constant equal to the average of traj over block k-1, computed by the
    trapezoid rule on the fine mesh (both block-boundary samples carry
    half weight). The final node at t = T carries the last block's value.

    Args:
        traj: input trajectory; its n_steps must be divisible by 2^level.n.
        level: dyadic depth and seed field (on the same spatial grid).

    Returns:
        Trajectory that is constant within every dyadic block.
    """
    tg = traj.timegrid
    blocks = 2**level.n
    if tg.n_steps % blocks != 0:
        raise ValueError(
            f"n_steps={tg.n_steps} is not divisible by the 2^{level.n} "
            "dyadic blocks"
        )
    if level.seed_field.grid != traj.grid:
        raise ValueError("seed field lives on a different spatial grid")
    s = tg.n_steps // blocks
    u = traj.stacked()
    avg = _block_averages(u, blocks, s)
    block_value = np.empty_like(avg)
    block_value[0] = level.seed_field.values
    block_value[1:] = avg[:-1]
    out = np.empty_like(u)
    out[: tg.n_steps] = np.repeat(block_value, s, axis=0)
    out[tg.n_steps] = block_value[-1]
    return Trajectory.from_matrix(tg, traj.grid, out)


def smoothed_seed(u0: Field, n: int) -> Field:
    """Solve (I - 2^{-n} Lap_h) w = u0, a one-step implicit smoothing of u0.

    The result is the default block-0 seed: it lies in the discrete H1_0
    space and approaches u0 in L2 as n grows (for the k-th discrete sine
    mode it equals u0 / (1 + 2^{-n} mu_k) exactly).
    """
    if n < 1:
        raise ValueError(f"smoothing level must be >= 1, got {n}")
    grid = u0.grid
    eps = 2.0**-n
    h2 = grid.h * grid.h
    ab = np.empty((2, grid.n_interior))
    ab[0] = -eps / h2
    ab[0, 0] = 0.0
    ab[1] = 1.0 + 2.0 * eps / h2
    return Field(grid, solveh_banded(ab, np.asarray(u0.values)))


def _euclidean_embedding(grid: SpatialGrid, u: np.ndarray, kind: str) -> np.ndarray:
    """Rows e_i with |e_i - e_j|_2 = |u_i - u_j|_kind, for the Hilbert kinds."""
    h = grid.h
    if kind == "L2":
        return np.sqrt(h) * u
    if kind == "V_H1":
        diffs = np.diff(u, axis=1, prepend=0.0, append=0.0)
        return diffs / np.sqrt(h)
    if kind == "Hminus1":
        # -Lap_h = R^T R (banded Cholesky, R upper bidiagonal), so
        # |f|_Hminus1^2 = h f^T (R^T R)^{-1} f = |sqrt(h) R^{-T} f|_2^2.
        cb = _neg_lap_cholesky(grid.n_interior)
        lower = np.vstack([cb[1], np.append(cb[0, 1:], 0.0)])
        x = solve_banded((1, 0), lower, u.T)
        return np.sqrt(h) * x.T
    raise ValueError(f"unknown norm kind {kind!r}")


def fractional_seminorm(
    traj: Trajectory,
    alpha: float,
    p: float,
    norm_kind: str = "L2",
    spatial_p: float | None = None,
) -> float:
    """Discrete fractional Sobolev norm of a trajectory in time.

    Computes the p-th root of

        sum_k dt |u(t_k)|^p
        + sum_{i != j} dt^2 |u(t_i) - u(t_j)|^p / |t_i - t_j|^{1 + alpha p}

    with both sums running over the left nodes k, i, j = 0..n_steps-1 and
    |.| the spatial norm norm_kind (pass spatial_p for kind "Lp").

    Args:
        traj: the trajectory.
        alpha: fractional order, strictly inside (0, 1).
        p: time integrability exponent, >= 1.
        norm_kind: spatial norm kind ("L2", "V_H1", "Hminus1", "Lp").
        spatial_p: exponent for the "Lp" spatial kind.

    Returns:
        The norm value (nonnegative).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if p < 1:
        raise ValueError(f"time exponent p must be >= 1, got {p}")
    tg = traj.timegrid
    n, dt = tg.n_steps, tg.dt
    grid = traj.grid
    u = traj.stacked()[:n]
    # weight of the gap g = |i - j|: dt^2 / (g dt)^{1 + alpha p}
    gap_w = dt * dt / (dt * np.arange(1, n)) ** (1.0 + alpha * p)
    if norm_kind in _HILBERT_KINDS:
        e = _euclidean_embedding(grid, u, norm_kind)
        row_p = np.einsum("ij,ij->i", e, e) ** (0.5 * p)
        acc = 0.0
        for g in range(1, n):
            d = e[g:] - e[:-g]
            d2 = np.einsum("ij,ij->i", d, d)
            acc += gap_w[g - 1] * np.sum(d2 ** (0.5 * p))
    elif norm_kind == "Lp":
        if spatial_p is None:
            raise ValueError('norm kind "Lp" needs spatial_p')
        h = grid.h
        row_p = (h * np.sum(np.abs(u) ** spatial_p, axis=1)) ** (p / spatial_p)
        acc = 0.0
        for g in range(1, n):
            d = u[g:] - u[:-g]
            dn = (h * np.sum(np.abs(d) ** spatial_p, axis=1)) ** (1.0 / spatial_p)
            acc += gap_w[g - 1] * np.sum(dn**p)
    else:
        raise ValueError(f"unknown norm kind {norm_kind!r}")
    total = dt * np.sum(row_p) + 2.0 * acc
    return float(total ** (1.0 / p))


def trajectory_lp_norm(
    traj: Trajectory,
    norm_kind: str,
    p: float,
    spatial_p: float | None = None,
) -> float:
    """Left-Riemann time-Lp norm (sum_k dt |u(t_k)|^p_kind)^{1/p}."""
    return _matrix_lp_norm(
        traj.grid, traj.stacked(), traj.timegrid.dt, norm_kind, p, spatial_p
    )


def _matrix_lp_norm(
    grid: SpatialGrid,
    u: np.ndarray,
    dt: float,
    norm_kind: str,
    p: float,
    spatial_p: float | None = None,
) -> float:
    if p < 1:
        raise ValueError(f"time exponent p must be >= 1, got {p}")
    rows = u[:-1]
    vals = np.array([norm_values(grid, row, norm_kind, spatial_p) for row in rows])
    return float((dt * np.sum(vals**p)) ** (1.0 / p))


@dataclass(frozen=True, eq=False)
class RateFit:
    """Per-trajectory decay of |proj_n(x) - x| against the level n."""

    levels: tuple[int, ...]
    errors: np.ndarray  # (n_trajectories, n_levels)
    slopes: np.ndarray  # (n_trajectories,), nan where the error vanishes
    exact: np.ndarray  # True where every level reproduced the input exactly
    alpha: float

    @property
    def slope(self) -> float:
        """Median fitted slope over the trajectories with nonzero error."""
        finite = self.slopes[np.isfinite(self.slopes)]
        if finite.size == 0:
            raise ValueError("every trajectory was reproduced exactly; no slope")
        return float(np.median(finite))


def haar_rate_experiment(
    trajs: list[Trajectory] | tuple[Trajectory, ...],
    levels: tuple[int, ...] | range,
    alpha: float,
    p: float,
    norm_kind: str = "L2",
    spatial_p: float | None = None,
) -> RateFit:
    """Fit the decay rate of the block-averaging error over dyadic levels.

    For each trajectory x the block-0 seed is x's own initial sample, so a
    constant trajectory is reproduced exactly (reported via the exact
    mask, with slope nan). For the others the per-level error
    |proj_n(x) - x| in the time-Lp norm is fitted by least squares in
    log2(error) against n.

    Args:
        trajs: family of trajectories sharing compatible time grids.
        levels: at least three dyadic depths n.
        alpha: fractional order the decay is compared against (recorded).
        p: time integrability exponent of the error norm.
        norm_kind: spatial norm kind; spatial_p as in fractional_seminorm.

    Returns:
        RateFit with per-level errors and per-trajectory slopes.
    """
    levels = tuple(int(n) for n in levels)
    if len(levels) < 3:
        raise ValueError(f"rate fit needs at least 3 levels, got {len(levels)}")
    errors = np.empty((len(trajs), len(levels)))
    for i, traj in enumerate(trajs):
        u = traj.stacked()
        for j, n in enumerate(levels):
            proj = proj_shifted(traj, HaarLevel(n, traj.fields[0]))
            errors[i, j] = _matrix_lp_norm(
                traj.grid,
                proj.stacked() - u,
                traj.timegrid.dt,
                norm_kind,
                p,
                spatial_p,
            )
    slopes = np.full(len(trajs), np.nan)
    exact = np.zeros(len(trajs), dtype=bool)
    lev = np.asarray(levels, dtype=float)
    for i in range(len(trajs)):
        nonzero = errors[i] > 0.0
        exact[i] = not nonzero.any()
        if np.count_nonzero(nonzero) >= 3:
            slopes[i] = np.polyfit(lev[nonzero], np.log2(errors[i][nonzero]), 1)[0]
    errors.flags.writeable = False
    slopes.flags.writeable = False
    exact.flags.writeable = False
    return RateFit(levels, errors, slopes, exact, alpha)


def trajectory_to_csv(traj: Trajectory, path: str) -> None:
    """Write one row per time node: t, u(x_1), ..., u(x_N), 17 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"u_{j}" for j in range(1, traj.grid.n_interior + 1)])
        for t, f in zip(traj.timegrid.times, traj.fields):
            writer.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in f.values])


def trajectory_from_csv(path: str, dyadic_level: int | None = None) -> Trajectory:
    """Read a trajectory written by trajectory_to_csv.

    The horizon is recovered from the last time entry and the spatial grid
    from the column count; pass dyadic_level to restore the dyadic nesting
    annotation (it is not stored in the file).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    if len(header) < 3 or header[0] != "t":
        raise ValueError(f"{path} is not a trajectory file")
    data = np.asarray(rows)
    timegrid = TimeGrid(data.shape[0] - 1, T=data[-1, 0], dyadic_level=dyadic_level)
    grid = SpatialGrid(data.shape[1] - 1)
    return Trajectory.from_matrix(timegrid, grid, data[:, 1:])
