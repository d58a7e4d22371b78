"""Frozen-coefficient semi-implicit steppers for the three example problems.

Given a frozen trajectory xi and a noise path, the solver integrates

    du = ( A(u) + xi^{[1/2]} ) dt + noise,

with A implicit and the noise explicit, for three examples on the unit
interval with Dirichlet boundary:

  * heat_sqrt_drift:      A(u) = Lap_h u,            noise = sigma u dW
  * porous_sqrt_drift:    A(u) = Lap_h u^{[m]},      noise = sigma u dW
  * porous_gradient_noise: A(u) = Lap_h u^{[m]},     noise = D_h(xi^{[1/2]} dW)

The heat step is one SPD tridiagonal solve. The porous step runs a damped
Newton iteration on F(v) = v - dt Lap_h v^{[m]} - rhs with the tridiagonal
Jacobian I - dt Lap_h diag(m |v|^{m-1}); the returned iterate always
satisfies |F|_L2 <= newton_tol (1 + |rhs|_L2), otherwise NewtonDivergence
is raised and the caller may retry with a halved step (the increment dW is
split in half so its sum is preserved).

check_hypotheses measures, on random field pairs, the three structural
inequalities the solves rest on: a monotonicity defect, a coercivity
margin, and a growth ratio, each with an explicitly derived admissible
constant, and reports the smallest constants the data admits.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded, solveh_banded

from .grids import (
    Field,
    TripleKind,
    duality_pairing,
    laplacian_eigenvalue,
    laplacian_values,
    norm,
    norm_values,
    signed_power_values,
)
from .projection import Trajectory
from .rng import gaussian_stream
from .wiener import NoisePath, QWienerSpec, assemble_field

__all__ = [
    "ProblemSpec",
    "SolverConfig",
    "NewtonDivergence",
    "HypothesisReport",
    "step_heat",
    "step_porous",
    "gradient_noise_apply",
    "solve_frozen",
    "check_hypotheses",
    "KNOWN_EXAMPLES",
]

KNOWN_EXAMPLES = ("heat_sqrt_drift", "porous_sqrt_drift", "porous_gradient_noise")

_NOISE_FORMS = ("divergence", "pointwise")


class NewtonDivergence(RuntimeError):
    """The damped Newton iteration failed to meet its residual contract."""


@dataclass(frozen=True)
class SolverConfig:
    """Newton and retry controls; the time step always comes from the grid."""

    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    newton_max_halvings: int = 30
    dt_retries: int = 3

    def __post_init__(self) -> None:
        if self.newton_tol <= 0:
            raise ValueError(f"newton_tol must be positive, got {self.newton_tol}")
        if self.newton_max_iter < 1:
            raise ValueError("newton_max_iter must be >= 1")
        if self.newton_max_halvings < 0:
            raise ValueError("newton_max_halvings must be >= 0")
        if self.dt_retries < 0:
            raise ValueError("dt_retries must be >= 0")


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """One frozen-coefficient example problem.

    Attributes:
        example: one of KNOWN_EXAMPLES.
        qwiener: noise covariance spec (also fixes the spatial grid).
        initial_datum: starting Field, on the same grid.
        m: porous exponent, integer >= 2 (ignored by the heat example).
        sigma: coefficient of the pointwise-linear multiplicative noise
            sigma * u * dW used by the first two examples.
        gradient_noise_form: "divergence" for D_h(xi^{[1/2]} dW) or
            "pointwise" for (D_h xi^{[1/2]}) dW, third example only.
    """

    example: str
    qwiener: QWienerSpec
    initial_datum: Field
    m: int = 2
    sigma: float = 0.1
    gradient_noise_form: str = "divergence"

    def __post_init__(self) -> None:
        if self.example not in KNOWN_EXAMPLES:
            raise ValueError(
                f"unknown example {self.example!r}; pick one of {KNOWN_EXAMPLES}"
            )
        if self.is_porous:
            if int(self.m) != self.m or self.m < 2:
                raise ValueError(
                    f"porous examples need an integer exponent m >= 2, got {self.m}"
                )
        if self.sigma < 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")
        if self.gradient_noise_form not in _NOISE_FORMS:
            raise ValueError(
                f"gradient_noise_form must be one of {_NOISE_FORMS}, "
                f"got {self.gradient_noise_form!r}"
            )
        if self.initial_datum.grid != self.qwiener.grid:
            raise ValueError("initial datum and noise spec live on different grids")

    @property
    def is_porous(self) -> bool:
        return self.example != "heat_sqrt_drift"

    @property
    def triple(self) -> TripleKind:
        return TripleKind.porous(self.m) if self.is_porous else TripleKind.heat()

    @property
    def time_power(self) -> int:
        """Exponent of the time-Lp norm natural to the example's V space."""
        return self.m + 1 if self.is_porous else 2

    @property
    def drift_power(self) -> float:
        """The frozen drift is always xi^{[1/2]}."""
        return 0.5


def _check_step_inputs(u: Field, xi: Field, dw: Field, dt: float) -> None:
    if u.grid != xi.grid or u.grid != dw.grid:
        raise ValueError("step inputs live on different grids")
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")


def step_heat(u_k: Field, xi_k: Field, dw_k: Field, dt: float, sigma: float = 0.1) -> Field:
    """One semi-implicit heat step.

    Solves (I - dt Lap_h) u = u_k + dt xi_k^{[1/2]} + sigma u_k dw_k; the
    Laplacian is implicit (one SPD tridiagonal solve) and the drift and
    noise are explicit.
    """
    _check_step_inputs(u_k, xi_k, dw_k, dt)
    grid = u_k.grid
    rhs = (
        u_k.values
        + dt * signed_power_values(np.asarray(xi_k.values), 0.5)
        + sigma * u_k.values * dw_k.values
    )
    h2 = grid.h * grid.h
    ab = np.empty((2, grid.n_interior))
    ab[0] = -dt / h2
    ab[0, 0] = 0.0
    ab[1] = 1.0 + 2.0 * dt / h2
    return Field(grid, solveh_banded(ab, rhs))


def _porous_residual(grid, v, dt, m, rhs):
    return v - dt * laplacian_values(grid, signed_power_values(v, m)) - rhs


def _newton_porous(grid, u_start, rhs, dt, m, config):
    """Damped Newton for v - dt Lap_h v^{[m]} = rhs; returns (v, iterations)."""
    h2 = grid.h * grid.h
    v = u_start.copy()
    fv = _porous_residual(grid, v, dt, m, rhs)
    rn = norm_values(grid, fv, "L2")
    target = config.newton_tol * (1.0 + norm_values(grid, rhs, "L2"))
    iterations = 0
    while rn > target:
        if iterations >= config.newton_max_iter:
            raise NewtonDivergence(
                f"no convergence in {config.newton_max_iter} iterations "
                f"(residual {rn:.3e}, target {target:.3e}, dt {dt:.3e})"
            )
        d = m * np.abs(v) ** (m - 1)
        ab = np.empty((3, grid.n_interior))
        ab[0] = -dt * d / h2
        ab[1] = 1.0 + 2.0 * dt * d / h2
        ab[2] = -dt * d / h2
        delta = solve_banded((1, 1), ab, -fv)
        lam = 1.0
        for _ in range(config.newton_max_halvings + 1):
            trial = v + lam * delta
            ft = _porous_residual(grid, trial, dt, m, rhs)
            rt = norm_values(grid, ft, "L2")
            if rt < rn:
                break
            lam *= 0.5
        else:
            raise NewtonDivergence(
                f"damping stalled after {config.newton_max_halvings} halvings "
                f"(residual {rn:.3e}, dt {dt:.3e})"
            )
        v, fv, rn = trial, ft, rt
        iterations += 1
    return v, iterations


def _porous_step_core(u_k, xi_k, dw_k, dt, m, cfg, sigma, noise_term):
    _check_step_inputs(u_k, xi_k, dw_k, dt)
    if int(m) != m or m < 1:
        raise ValueError(f"porous exponent must be an integer >= 1, got {m}")
    grid = u_k.grid
    if noise_term is None:
        noise = sigma * u_k.values * dw_k.values
    else:
        if noise_term.grid != grid:
            raise ValueError("noise term lives on a different grid")
        noise = np.asarray(noise_term.values)
    rhs = u_k.values + dt * signed_power_values(np.asarray(xi_k.values), 0.5) + noise
    return _newton_porous(grid, np.asarray(u_k.values), rhs, dt, m, cfg)


def step_porous(
    u_k: Field,
    xi_k: Field,
    dw_k: Field,
    dt: float,
    m: int,
    config: SolverConfig | None = None,
    sigma: float = 0.1,
    noise_term: Field | None = None,
) -> Field:
    """One implicit porous-medium step by damped Newton.

    Solves u - dt Lap_h u^{[m]} = u_k + dt xi_k^{[1/2]} + noise, where the
    noise contribution is sigma * u_k * dw_k unless an assembled
    noise_term Field is supplied (the gradient-noise example). With m = 1
    the system is linear and reproduces step_heat.

    Raises:
        NewtonDivergence: residual contract unmet; retry with smaller dt.
    """
    cfg = config if config is not None else SolverConfig()
    v, _ = _porous_step_core(u_k, xi_k, dw_k, dt, m, cfg, sigma, noise_term)
    return Field(u_k.grid, v)


def _one_sided_centered_diff(grid, g):
    """Centered difference inside, first-order one-sided at the two ends."""
    h = grid.h
    out = np.empty_like(g)
    out[1:-1] = (g[2:] - g[:-2]) / (2.0 * h)
    out[0] = (g[1] - g[0]) / h
    out[-1] = (g[-1] - g[-2]) / h
    return out


def gradient_noise_apply(xi_k: Field, dw_k: Field, form: str = "divergence") -> Field:
    """Gradient-coupled noise increment D_h(xi^{[1/2]} dW).

    The "divergence" form differences the product; the "pointwise" form
    multiplies the differenced xi^{[1/2]} by the increment instead.
    """
    if xi_k.grid != dw_k.grid:
        raise ValueError("fields live on different grids")
    if form not in _NOISE_FORMS:
        raise ValueError(f"form must be one of {_NOISE_FORMS}, got {form!r}")
    grid = xi_k.grid
    root = signed_power_values(np.asarray(xi_k.values), 0.5)
    if form == "divergence":
        out = _one_sided_centered_diff(grid, root * dw_k.values)
    else:
        out = _one_sided_centered_diff(grid, root) * dw_k.values
    return Field(grid, out)


def _advance(problem, u, xi_k, dw_values, dt, cfg, stats, depth):
    grid = problem.qwiener.grid
    dw = Field(grid, dw_values)
    try:
        if problem.example == "heat_sqrt_drift":
            return step_heat(u, xi_k, dw, dt, sigma=problem.sigma)
        if problem.example == "porous_sqrt_drift":
            v, its = _porous_step_core(
                u, xi_k, dw, dt, problem.m, cfg, problem.sigma, None
            )
        else:
            noise = gradient_noise_apply(xi_k, dw, problem.gradient_noise_form)
            v, its = _porous_step_core(
                u, xi_k, dw, dt, problem.m, cfg, problem.sigma, noise
            )
        stats["newton_iterations"] += its
        return Field(grid, v)
    except NewtonDivergence:
        if depth >= cfg.dt_retries:
            raise
        stats["dt_retries"] += 1
        half = 0.5 * dw_values
        mid = _advance(problem, u, xi_k, half, 0.5 * dt, cfg, stats, depth + 1)
        return _advance(problem, mid, xi_k, half, 0.5 * dt, cfg, stats, depth + 1)


def solve_frozen(
    problem: ProblemSpec,
    xi: Trajectory,
    noise: NoisePath,
    config: SolverConfig | None = None,
    collect_stats: dict | None = None,
) -> Trajectory:
    """Integrate the frozen-coefficient problem across the whole time grid.

    Step k freezes the coefficient at xi(t_k) and uses the k-th noise
    increment; the output starts at the problem's initial datum. The
    result is a pure function of (problem, xi, noise, config). On Newton
    divergence a step is retried on two half steps (splitting the
    increment in half), at most config.dt_retries deep, before the error
    propagates.

    Args:
        problem: example problem.
        xi: frozen trajectory on the same grids as the problem.
        noise: mode increments on the same time grid as xi.
        config: Newton controls (defaults are fine for the examples).
        collect_stats: optional dict; filled with "newton_iterations"
            (not tracked for heat) and "dt_retries".

    Returns:
        Trajectory of the solution, n_steps + 1 samples.
    """
    cfg = config if config is not None else SolverConfig()
    tg = xi.timegrid
    if noise.timegrid.n_steps != tg.n_steps or noise.timegrid.T != tg.T:
        raise ValueError("frozen trajectory and noise live on different time grids")
    if xi.grid != problem.qwiener.grid:
        raise ValueError("frozen trajectory lives on a different spatial grid")
    if noise.n_modes != problem.qwiener.n_modes:
        raise ValueError(
            f"noise has {noise.n_modes} modes, spec wants {problem.qwiener.n_modes}"
        )
    if not np.all(np.isfinite(xi.stacked())):
        raise ValueError("frozen trajectory contains non-finite values")
    stats = {"newton_iterations": 0, "dt_retries": 0}
    dt = tg.dt
    u = problem.initial_datum
    samples = [u]
    basis = problem.qwiener.basis
    for k in range(tg.n_steps):
        dw_values = noise.increments[k] @ basis
        u = _advance(problem, u, xi.fields[k], dw_values, dt, cfg, stats, 0)
        samples.append(u)
    if collect_stats is not None:
        collect_stats.update(stats)
    return Trajectory(tg, tuple(samples))


def _operator_values(problem, u_values, xi_values):
    """A(u) + xi^{[1/2]} as raw nodal values (an element of V*)."""
    grid = problem.qwiener.grid
    power = problem.m if problem.is_porous else 1
    return laplacian_values(grid, signed_power_values(u_values, power)) + (
        signed_power_values(xi_values, 0.5)
    )


def _hs_norm_sq(problem, multiplier_values):
    """Hilbert-Schmidt norm^2 of phi -> multiplier * phi over the Q-basis.

    sum_i lambda_i |multiplier psi_i|_H^2 with H the example's pivot norm.
    """
    spec = problem.qwiener
    grid = spec.grid
    kind = "Hminus1" if problem.is_porous else "L2"
    rows = multiplier_values[None, :] * spec.basis
    return float(
        sum(
            lam * norm_values(grid, row, kind) ** 2
            for lam, row in zip(spec.eigenvalues, rows)
        )
    )


def _hs_norm_sq_gradient(problem, xi_values):
    """HS norm^2 of phi -> D_h(xi^{[1/2]} phi) in the H^-1 pivot norm."""
    spec = problem.qwiener
    grid = spec.grid
    root = signed_power_values(xi_values, 0.5)
    total = 0.0
    for lam, psi in zip(spec.eigenvalues, spec.basis):
        if problem.gradient_noise_form == "divergence":
            row = _one_sided_centered_diff(grid, root * psi)
        else:
            row = _one_sided_centered_diff(grid, root) * psi
        total += lam * norm_values(grid, row, "Hminus1") ** 2
    return float(total)


def _f_xi(problem, xi_field):
    """Coercivity forcing term: |xi|_L1 (heat) or |xi|_V^{m+1} (porous)."""
    if problem.is_porous:
        return norm(xi_field, "Lp", p=problem.m + 1) ** (problem.m + 1)
    return float(
        xi_field.grid.h * np.sum(np.abs(np.asarray(xi_field.values)))
    )


def _lipschitz_constant(problem):
    """Admissible C for the monotonicity defect, from the noise structure.

    With Sigma_1(u) = sigma * u the Hilbert-Schmidt difference is
    sigma^2 sum_i lambda_i |(u1-u2) psi_i|_H^2. In the L2 pivot this is at
    most sigma^2 max_j w(x_j) |u1-u2|_L2^2 with w = sum_i lambda_i psi_i^2.
    In the H^-1 pivot, |f psi_i|_{H^-1}^2 <= |f psi_i|_L2^2 / mu_1 and
    |f|_L2^2 <= mu_max |f|_{H^-1}^2 bridge the norms, at the price of the
    grid-dependent factor mu_max / mu_1. The gradient-noise example does
    not touch u, so its constant is zero.
    """
    spec = problem.qwiener
    grid = spec.grid
    if problem.example == "porous_gradient_noise":
        return 0.0
    weight = float(np.max(spec.eigenvalues @ spec.basis**2))
    c = problem.sigma**2 * weight
    if problem.is_porous:
        mu_min = laplacian_eigenvalue(grid, 1)
        mu_max = laplacian_eigenvalue(grid, grid.n_interior)
        c *= mu_max / mu_min
    return c


def _coercivity_constant(problem):
    """Admissible C for the coercivity margin; see check_hypotheses.

    Heat: 2<Lap u, u> = -2|u|_V^2 exactly, 2<xi^{1/2}, u> <= |xi|_L1 +
    |u|_H^2 by Young, and the noise adds at most the Lipschitz weight, so
    C = 1 + C_lip works. Porous: the 2|u|_V^{m+1} term cancels the
    operator part exactly and the pairing with xi^{1/2} is the H^-1 inner
    product, giving the extra 1/mu_1 from |xi^{1/2}|_{H^-1}^2 <=
    |xi|_L1 / mu_1 <= (1 + f_xi) / mu_1. The gradient noise example swaps
    the u-Lipschitz weight for the xi-driven Hilbert-Schmidt bound
    |D_h g|_{H^-1} <= 4 |g|_L2 (one-sided rows cost three boundary values,
    each at most h^{-1/2}|g|_L2), hence 32 trace(Q) in front of 1 + f_xi.
    """
    grid = problem.qwiener.grid
    if problem.example == "heat_sqrt_drift":
        return 1.0 + _lipschitz_constant(problem)
    mu_min = laplacian_eigenvalue(grid, 1)
    if problem.example == "porous_sqrt_drift":
        return 1.0 + 1.0 / mu_min + _lipschitz_constant(problem)
    return 1.0 + 1.0 / mu_min + 32.0 * problem.qwiener.trace


@dataclass(frozen=True, eq=False)
class HypothesisReport:
    """Per-pair structural inequality measurements for one example."""

    example: str
    n_pairs: int
    c_monotone: float
    c_coercive: float
    c_growth: float
    defects: np.ndarray  # monotonicity, must be <= 0 (up to roundoff)
    margins: np.ndarray  # coercivity, must be <= 0 (up to roundoff)
    ratios: np.ndarray  # growth, <= 1 with c_growth fitted on the run
    c_monotone_min: float
    c_coercive_min: float

    @property
    def all_hold(self) -> bool:
        tol = 1e-9
        return bool(
            np.all(self.defects <= tol)
            and np.all(self.margins <= tol)
            and np.all(self.ratios <= 1.0 + 1e-12)
        )

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["pair_id", "defect_a", "margin_b", "ratio_c"])
            for i in range(self.n_pairs):
                writer.writerow(
                    [
                        i,
                        f"{self.defects[i]:.17g}",
                        f"{self.margins[i]:.17g}",
                        f"{self.ratios[i]:.17g}",
                    ]
                )


def check_hypotheses(
    problem: ProblemSpec,
    pairs: list[tuple[Field, Field, Field]] | None = None,
    n_pairs: int = 100,
    seed: int = 0,
) -> HypothesisReport:
    """Measure monotonicity, coercivity, and growth on random field pairs.

    For each triple (u1, u2, xi):

      (a) defect = 2<A(u1) - A(u2), u1 - u2> + |Sigma(u1) - Sigma(u2)|_HS^2
          - C_mono |u1 - u2|_H^2, with C_mono derived from the pointwise
          linear noise (zero for the gradient example);
      (b) margin = 2<A(u1) + xi^{[1/2]}, u1> + |Sigma|_HS^2
          + theta |u1|_V^power - C_coer |u1|_H^2 - C_coer (1 + f_xi),
          theta = 1 (heat, power 2) or 2 (porous, power m + 1);
      (c) ratio of |A(u1) + xi^{[1/2]}|_{V*}^q (q the dual exponent) to
          C_growth (|u1|_V^power + 1 + f_xi) with C_growth the smallest
          constant admissible over the run.

    Args:
        problem: example problem (fixes norms and constants).
        pairs: optional explicit (u1, u2, xi) triples; when omitted,
            n_pairs random triples with amplitudes log-spread across
            [1e-3, 1e2] are drawn from the given seed.

    Returns:
        HypothesisReport; violations show up in the arrays (never raised).
    """
    grid = problem.qwiener.grid
    if pairs is None:
        if n_pairs < 1:
            raise ValueError(f"n_pairs must be >= 1, got {n_pairs}")
        stream = gaussian_stream(seed, 4)
        pairs = []
        for _ in range(n_pairs):
            amp = 10.0 ** stream.uniform(-3.0, 2.0, size=3)
            pairs.append(
                (
                    Field(grid, amp[0] * stream.standard_normal(grid.n_interior)),
                    Field(grid, amp[1] * stream.standard_normal(grid.n_interior)),
                    Field(grid, amp[2] * stream.standard_normal(grid.n_interior)),
                )
            )
    n = len(pairs)
    triple = problem.triple
    power = problem.time_power  # 2 heat, m+1 porous: the V-norm exponent
    theta = 2.0 if problem.is_porous else 1.0
    dual_q = (problem.m + 1) / problem.m if problem.is_porous else 2.0
    c_mono = _lipschitz_constant(problem)
    c_coer = _coercivity_constant(problem)
    defects = np.empty(n)
    margins = np.empty(n)
    growth_num = np.empty(n)
    growth_den = np.empty(n)
    c_mono_min = 0.0
    c_coer_min = 0.0
    for i, (u1, u2, xi) in enumerate(pairs):
        v1, v2, xv = (np.asarray(f.values) for f in (u1, u2, xi))
        du = Field(grid, v1 - v2)
        a_gap = Field(
            grid,
            _operator_values(problem, v1, xv) - _operator_values(problem, v2, xv),
        )
        pair_term = 2.0 * duality_pairing(a_gap, du, triple)
        if problem.example == "porous_gradient_noise":
            hs_gap = 0.0
        else:
            hs_gap = _hs_norm_sq(problem, problem.sigma * (v1 - v2))
        h_gap_sq = triple.h_norm(du) ** 2
        defects[i] = pair_term + hs_gap - c_mono * h_gap_sq
        if h_gap_sq > 0:
            c_mono_min = max(c_mono_min, (pair_term + hs_gap) / h_gap_sq)
        full_op = Field(grid, _operator_values(problem, v1, xv))
        if problem.example == "porous_gradient_noise":
            hs_self = _hs_norm_sq_gradient(problem, xv)
        else:
            hs_self = _hs_norm_sq(problem, problem.sigma * v1)
        f_xi = _f_xi(problem, xi)
        h_sq = triple.h_norm(u1) ** 2
        v_pow = triple.v_norm(u1) ** power
        base = 2.0 * duality_pairing(full_op, u1, triple) + hs_self + theta * v_pow
        margins[i] = base - c_coer * (h_sq + 1.0 + f_xi)
        c_coer_min = max(c_coer_min, base / (h_sq + 1.0 + f_xi))
        growth_num[i] = triple.vstar_norm(full_op) ** dual_q
        growth_den[i] = v_pow + 1.0 + f_xi
    c_growth = float(np.max(growth_num / growth_den))
    ratios = growth_num / (c_growth * growth_den) if c_growth > 0 else growth_num
    for arr in (defects, margins, ratios):
        arr.flags.writeable = False
    return HypothesisReport(
        example=problem.example,
        n_pairs=n,
        c_monotone=c_mono,
        c_coercive=c_coer,
        c_growth=c_growth,
        defects=defects,
        margins=margins,
        ratios=ratios,
        c_monotone_min=float(max(c_mono_min, 0.0)),
        c_coercive_min=float(max(c_coer_min, 0.0)),
    )
