"""Monte Carlo estimators for the energy functionals behind the construction.

The quantitative heart of the fixed-point argument is one inequality per
example: the solution of the frozen-coefficient problem satisfies

    E[sup_t |u(t)|_H^2] + 4 E[int_0^T |u(t)|_V^power dt]
        <= (2 E|u_0|_H^2 + C R^q + C T) e^{CT},

with power = 2, q = 1/2 for the heat example and power = m + 1,
q = 1/(m+1) for the porous examples, R a bound on the coefficient's own
energy. The constant C is never written down anywhere, so energy_report
turns the inequality into a falsifiable test: fit the smallest admissible
C on a calibration ensemble (with a three-standard-error cushion), then
check the bound on an independent hold-out ensemble.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .grids import TripleKind
from .projection import TimeGrid, Trajectory
from .rng import path_seed
from .solver import NewtonDivergence, ProblemSpec, SolverConfig, solve_frozen
from .wiener import sample_increments

__all__ = [
    "EstimateInvalid",
    "EnergyReport",
    "mc_mean_stderr",
    "pathwise_sup_H",
    "integral_v_power",
    "energy_report",
]


class EstimateInvalid(RuntimeError):
    """Too many failed paths (or degenerate data) to report an estimate."""


def mc_mean_stderr(samples) -> tuple[float, float]:
    """Arithmetic mean and standard error of a finite sample list.

    Args:
        samples: at least two finite numbers.

    Returns:
        (mean, sample standard deviation / sqrt(len)).
    """
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 1 or arr.size < 2:
        raise ValueError(f"need at least 2 samples, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("samples contain non-finite values")
    return float(arr.mean()), float(arr.std(ddof=1) / np.sqrt(arr.size))


def pathwise_sup_H(traj: Trajectory, triple: TripleKind) -> float:
    """max over the sample times of |w(t_k)|_H^2 (squared pivot norm)."""
    return max(triple.h_norm(f) ** 2 for f in traj.fields)


def integral_v_power(traj: Trajectory, triple: TripleKind, power: float) -> float:
    """Left-endpoint quadrature of int_0^T |w(t)|_V^power dt."""
    if power <= 0:
        raise ValueError(f"power must be positive, got {power}")
    dt = traj.timegrid.dt
    return dt * float(
        sum(triple.v_norm(f) ** power for f in traj.fields[:-1])
    )


@dataclass(frozen=True)
class EnergyReport:
    """Calibration/hold-out verdict for one example's energy inequality."""

    example: str
    n_paths: int
    seed_base: int
    sup_h_sq: float
    sup_h_sq_stderr: float
    int_v_m: float
    int_v_m_stderr: float
    power: float
    radius: float
    c_hat: float
    bound_rhs: float
    lhs_holdout: float
    lhs_holdout_stderr: float
    holds: bool
    n_failures: int

    def csv_row(self) -> str:
        cells = [
            self.example,
            str(self.n_paths),
            str(self.seed_base),
            f"{self.sup_h_sq:.17g}",
            f"{self.sup_h_sq_stderr:.17g}",
            f"{self.int_v_m:.17g}",
            f"{self.int_v_m_stderr:.17g}",
            f"{self.power:.17g}",
            f"{self.radius:.17g}",
            f"{self.c_hat:.17g}",
            f"{self.bound_rhs:.17g}",
            f"{self.lhs_holdout:.17g}",
            f"{self.lhs_holdout_stderr:.17g}",
            str(int(self.holds)),
            str(self.n_failures),
        ]
        return ",".join(cells)

    @staticmethod
    def csv_header() -> str:
        return (
            "example,n_paths,seed_base,sup_h_sq,sup_h_sq_stderr,"
            "int_v_m,int_v_m_stderr,power,radius,c_hat,bound_rhs,"
            "lhs_holdout,lhs_holdout_stderr,holds,n_failures"
        )

    def summary(self) -> str:
        verdict = "holds" if self.holds else "VIOLATED"
        return (
            f"energy inequality [{self.example}]: "
            f"E sup|u|_H^2 = {self.sup_h_sq:.6g} (+-{self.sup_h_sq_stderr:.2g}), "
            f"4 E int |u|_V^{self.power:g} = {4 * self.int_v_m:.6g} "
            f"(+-{4 * self.int_v_m_stderr:.2g}); "
            f"hold-out LHS {self.lhs_holdout:.6g} vs bound {self.bound_rhs:.6g} "
            f"(C^ = {self.c_hat:.6g}, R = {self.radius:.6g}) -> {verdict}"
        )


def _bound_rhs(c, u0_h_sq, radius, q, horizon):
    return (2.0 * u0_h_sq + c * radius**q + c * horizon) * np.exp(c * horizon)


def _path_samples(problem, timegrid, level, seeds, config):
    """Per-path (sup_H^2, int_V^power, coefficient energy) triples.

    Each path builds the dyadic fixed point for its own noise, then
    evaluates the energy functionals of the solution driven by that fixed
    coefficient. Failed paths (Newton divergence surviving all retries)
    are recorded as None.
    """
    from .fixed_point import staircase_construct

    triple = problem.triple
    power = problem.time_power
    out = []
    for seed in seeds:
        noise = sample_increments(problem.qwiener, timegrid, seed)
        try:
            xi_star = staircase_construct(problem, level, noise, config)
            u = solve_frozen(problem, xi_star, noise, config)
        except NewtonDivergence:
            out.append(None)
            continue
        out.append(
            (
                pathwise_sup_H(u, triple),
                integral_v_power(u, triple, power),
                integral_v_power(xi_star, triple, power),
            )
        )
    return out


def energy_report(
    problem: ProblemSpec,
    level,
    timegrid: TimeGrid,
    n_paths: int = 64,
    seed_base: int = 0,
    config: SolverConfig | None = None,
) -> EnergyReport:
    """Fit and test the example's energy inequality on two path ensembles.

    Calibration paths i = 0..n_paths-1 (seeds derived from seed_base) fix
    the radius R (mean coefficient energy) and the smallest C with
    bound_rhs(C) >= calibration LHS + 3 stderr; hold-out paths
    i = n_paths..2n_paths-1 then re-measure the LHS against that frozen
    bound. Paths whose solves diverge are dropped; more than 5% of them
    invalidates the report.

    Returns:
        EnergyReport; the verdict sits in the holds flag (never raised).

    Raises:
        EstimateInvalid: more than 5% of paths failed, or too few survived.
    """
    if n_paths < 16:
        raise ValueError(f"need at least 16 paths per ensemble, got {n_paths}")
    cal_seeds = [path_seed(seed_base, i) for i in range(n_paths)]
    hold_seeds = [path_seed(seed_base, n_paths + i) for i in range(n_paths)]
    cal = _path_samples(problem, timegrid, level, cal_seeds, config)
    hold = _path_samples(problem, timegrid, level, hold_seeds, config)
    n_failures = sum(1 for r in cal + hold if r is None)
    if n_failures > 0.05 * (2 * n_paths):
        raise EstimateInvalid(
            f"{n_failures} of {2 * n_paths} paths failed to solve"
        )
    cal = [r for r in cal if r is not None]
    hold = [r for r in hold if r is not None]
    if len(cal) < 2 or len(hold) < 2:
        raise EstimateInvalid("not enough surviving paths to estimate")

    power = problem.time_power
    q = 0.5 if problem.example == "heat_sqrt_drift" else 1.0 / (problem.m + 1)
    u0_h_sq = problem.triple.h_norm(problem.initial_datum) ** 2
    horizon = timegrid.T

    cal_sup, cal_int, cal_energy = (np.array(col) for col in zip(*cal))
    sup_mean, sup_stderr = mc_mean_stderr(cal_sup)
    int_mean, int_stderr = mc_mean_stderr(cal_int)
    lhs_mean, lhs_stderr = mc_mean_stderr(cal_sup + 4.0 * cal_int)
    radius = float(np.mean(cal_energy))
    target = lhs_mean + 3.0 * lhs_stderr

    def gap(c):
        return _bound_rhs(c, u0_h_sq, radius, q, horizon) - target

    if gap(0.0) >= 0.0:
        c_hat = 0.0
    else:
        c_hi = 1.0
        while gap(c_hi) < 0.0:
            c_hi *= 2.0
            if c_hi > 1e12:
                raise EstimateInvalid("no finite constant closes the bound")
        c_hat = float(brentq(gap, 0.0, c_hi, xtol=1e-12, rtol=1e-12))
    bound = float(_bound_rhs(c_hat, u0_h_sq, radius, q, horizon))

    hold_sup, hold_int, _ = (np.array(col) for col in zip(*hold))
    hold_mean, hold_stderr = mc_mean_stderr(hold_sup + 4.0 * hold_int)

    return EnergyReport(
        example=problem.example,
        n_paths=n_paths,
        seed_base=seed_base,
        sup_h_sq=sup_mean,
        sup_h_sq_stderr=sup_stderr,
        int_v_m=int_mean,
        int_v_m_stderr=int_stderr,
        power=float(power),
        radius=radius,
        c_hat=c_hat,
        bound_rhs=bound,
        lhs_holdout=hold_mean,
        lhs_holdout_stderr=hold_stderr,
        holds=bool(hold_mean <= bound),
        n_failures=n_failures,
    )
