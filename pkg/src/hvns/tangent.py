"""Linearized flow, trace sums, and attractor-dimension estimates.

The tangent equation dU/dt = -eps*A^l U - nu*A U - B(u,U) - B(U,u) is
co-evolved with the base trajectory using the exact derivative of the
discrete base step: every tangent stage reuses the base stage values,
so the tangent solution is the derivative of the numerical solution
map itself, not a separate discretization.

Dimension estimates follow the Benettin recipe: m tangent vectors are
re-orthonormalized (modified Gram-Schmidt in L^2) every ortho_every
steps, and right after each orthonormalization the per-direction trace
contributions

    s_j = -eps ||A^(l/2) phi_j||^2 - nu ||phi_j||_1^2 - b(phi_j, u, phi_j)

are sampled.  q_m is the time mean of the prefix sums over the
averaging window, a finite-time surrogate for the lim sup; the window,
burn-in, and a batch-mean standard error are always reported.  The
linearization pattern is applied verbatim for every l, not only l=2,
as noted in the report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from hvns.diagnostics import default_burn_in
from hvns.dynamics import BLOWUP_THRESHOLD, BlowUpError, SimConfig
from hvns.spectral import (
    PhysicalParams,
    SpectralField,
    _advect_coeffs,
    _project_coeffs,
    coeff_norm_sq,
    gram_defect,
    mgs_orthonormalize,
    sobolev_norm,
    stokes_eigenfields,
    trilinear_b,
)

__all__ = [
    "DimensionReport",
    "FrechetReport",
    "linearized_rhs",
    "trace_contributions",
    "trace_increment",
    "evolve_ensemble",
    "frechet_check",
    "resolved_mode_budget",
]


@dataclass(frozen=True)
class DimensionReport:
    """Trace-sum estimates q_1..q_m with their dimension bounds.

    m_star is the first m with q_m < 0 (None when every q_m >= 0 within
    error, flagged in notes); dim_H_bound equals m_star and dim_F_bound
    is m_star * (1 + max_j (q_j)_+ / |q_(m_star)|).
    """

    m: int
    q: np.ndarray
    q_se: np.ndarray
    m_star: int | None
    dim_H_bound: int | None
    dim_F_bound: float | None
    t_burn: float
    t_avg: float
    ortho_every: int
    samples: int
    aborted: bool
    notes: tuple


@dataclass(frozen=True)
class FrechetReport:
    amplitudes: tuple
    eta_norms: tuple
    slope: float
    residual: float
    linear: bool


def resolved_mode_budget(box) -> int:
    """Solenoidal degrees of freedom surviving the dealias mask."""
    return (box.d - 1) * (int(np.sum(box.dealias_mask)) - 1)


def linearized_rhs(U: SpectralField, u: SpectralField, params: PhysicalParams) -> SpectralField:
    """-eps*A^l U - nu*A U - B(u,U) - B(U,u)."""
    box = params.box
    if U.box != box or u.box != box:
        raise ValueError("tangent, base state, and forcing must share one box")
    from hvns.dynamics import linear_symbol

    c = -linear_symbol(box, params) * U.coeffs
    adv = _advect_coeffs(box, u.coeffs, U.coeffs) + _advect_coeffs(box, U.coeffs, u.coeffs)
    c = c - _project_coeffs(box, adv)
    c = np.array(c)
    c[(slice(None),) + box.origin] = 0.0
    return SpectralField(box, c)


def trace_contributions(u: SpectralField, basis, params: PhysicalParams) -> np.ndarray:
    """Per-direction contributions s_j for an orthonormal family."""
    box = params.box
    out = np.empty(len(basis), dtype=np.float64)
    for j, phi in enumerate(basis):
        if isinstance(phi, SpectralField):
            phi_c = phi.coeffs
            phi_f = phi
        else:
            phi_c = phi
            phi_f = SpectralField(box, phi)
        out[j] = (
            -params.eps * coeff_norm_sq(box, phi_c, float(params.l))
            - params.nu * coeff_norm_sq(box, phi_c, 1.0)
            - trilinear_b(phi_f, u, phi_f)
        )
    return out


def trace_increment(u: SpectralField, basis, params: PhysicalParams) -> float:
    """Trace of the linearized generator over span(phi_1..phi_m).

    The family must be orthonormal in L^2; a Gram deviation beyond 1e-6
    is a contract error.
    """
    box = params.box
    stack = np.stack([phi.coeffs if isinstance(phi, SpectralField) else phi for phi in basis])
    defect = gram_defect(box, stack)
    if defect > 1e-6:
        raise ValueError(f"basis is not orthonormal: Gram deviation {defect:g} > 1e-6")
    return float(np.sum(trace_contributions(u, basis, params)))


def _dimension_bounds(q: np.ndarray, q_se: np.ndarray):
    """m_star and the two dimension bounds from the q array."""
    notes = []
    negative = np.nonzero(q < 0.0)[0]
    if negative.size == 0:
        notes.append("no m with q_m < 0; dimension bounds undefined at this ensemble size")
        return None, None, None, notes
    m_star = int(negative[0]) + 1
    if q[m_star - 1] + q_se[m_star - 1] >= 0.0:
        notes.append(f"q_{m_star} < 0 but not beyond one standard error")
    top = float(np.max(np.clip(q[:m_star], 0.0, None))) if m_star > 1 else 0.0
    dim_f = m_star * (1.0 + top / abs(float(q[m_star - 1])))
    return m_star, m_star, dim_f, notes


def evolve_ensemble(
    base: SimConfig,
    m: int,
    t_avg: float,
    t_burn: float | None = None,
    ortho_every: int = 10,
    record_sink=None,
) -> DimensionReport:
    """Benettin ensemble run: burn in the base flow, then co-evolve m tangents.

    Tangents start as the first m solenoidal eigenmode directions, are
    re-orthonormalized every ortho_every steps, and the trace
    contributions are sampled right after each orthonormalization.  A
    tangent blow-up aborts the run; the report is then built from the
    windows accumulated so far and flagged.  record_sink, when given,
    receives one dict per sample with t, the prefix sums, and the
    log-stretching factors from the orthonormalization.
    """
    box = base.box
    params = base.params
    budget = resolved_mode_budget(box) // 4
    if m < 1:
        raise ValueError("ensemble size m must be >= 1")
    if m > budget:
        raise ValueError(f"ensemble size {m} exceeds the resolved budget {budget} (modes/4)")
    if ortho_every < 1:
        raise ValueError("ortho_every must be >= 1")
    if t_burn is None:
        t_burn = default_burn_in(params)
    dt = base.dt
    burn_steps = int(round(t_burn / dt))
    avg_steps = int(round(t_avg / dt))
    n_windows = avg_steps // ortho_every
    if n_windows < 1:
        raise ValueError("averaging window shorter than one orthonormalization period")

    stepper = base.stepper
    uc = base.u0.coeffs
    for step_index in range(1, burn_steps + 1):
        uc = stepper.advance(uc)
    fields, _ = stokes_eigenfields(box, m)
    V = np.stack([f.coeffs for f in fields])
    V, _ = mgs_orthonormalize(box, V)

    def sample(t, coeffs, stack, log_growth):
        s = trace_contributions(SpectralField(box, coeffs), list(stack), params)
        prefix = np.cumsum(s)
        if record_sink is not None:
            record_sink({"t": t, "prefix": prefix, "log_growth": log_growth})
        return prefix

    t0 = burn_steps * dt
    prefixes = [sample(t0, uc, V, np.zeros(m))]
    aborted = False
    notes = ["orthonormalization in the L^2 inner product",
             "trace contributions use the same exponent l as the dissipation"]
    for w in range(1, n_windows + 1):
        try:
            for _ in range(ortho_every):
                uc, V = stepper.advance_with_tangents(uc, V)
                if not np.all(np.isfinite(V)) or np.max(np.abs(V)) > BLOWUP_THRESHOLD:
                    raise BlowUpError(f"tangent blow-up in window {w}")
                if not np.all(np.isfinite(uc)) or np.max(np.abs(uc)) > BLOWUP_THRESHOLD:
                    raise BlowUpError(f"base-flow blow-up in window {w}")
        except BlowUpError as exc:
            notes.append(f"aborted: {exc}; report uses the last valid window")
            aborted = True
            break
        V, norms = mgs_orthonormalize(box, V)
        t = t0 + w * ortho_every * dt
        prefixes.append(sample(t, uc, V, np.log(norms)))

    series = np.array(prefixes)
    q = series.mean(axis=0)
    n = series.shape[0]
    n_batches = min(10, n // 2)
    if n_batches >= 2:
        usable = (n // n_batches) * n_batches
        bm = series[:usable].reshape(n_batches, -1, m).mean(axis=1)
        q_se = np.std(bm, axis=0, ddof=1) / math.sqrt(n_batches)
    else:
        q_se = np.zeros(m)
    m_star, dim_h, dim_f, extra = _dimension_bounds(q, q_se)
    notes.extend(extra)
    return DimensionReport(
        m=m,
        q=q,
        q_se=q_se,
        m_star=m_star,
        dim_H_bound=dim_h,
        dim_F_bound=dim_f,
        t_burn=burn_steps * dt,
        t_avg=n_windows * ortho_every * dt,
        ortho_every=ortho_every,
        samples=n,
        aborted=aborted,
        notes=tuple(notes),
    )


def frechet_check(base: SimConfig, direction: SpectralField, amplitudes) -> FrechetReport:
    """Second-order remainder test for the discrete solution map.

    For each amplitude a the perturbed run v starts from u0 + a*direction
    and eta(T) = v(T) - u(T) - a*U(T), with U the tangent solution from
    the direction itself (tangent linearity makes one tangent run serve
    all amplitudes).  Returns the fitted log-log slope of ||eta(T)||
    against a; when every remainder sits at round-off the dynamics are
    linear along the trajectory and the slope is reported as nan.
    """
    amplitudes = tuple(float(a) for a in amplitudes)
    if len(amplitudes) < 3:
        raise ValueError("need at least 3 amplitudes to fit a slope")
    if any(a <= 0 for a in amplitudes):
        raise ValueError("amplitudes must be positive")
    span = max(amplitudes) / min(amplitudes)
    if span < 100.0 * (1.0 - 1e-12):
        raise ValueError("amplitudes must span at least two decades")
    if direction.box != base.box:
        raise ValueError("direction lives on a different box")

    stepper = base.stepper
    n_steps = base.n_steps
    uc = base.u0.coeffs
    V = direction.coeffs[np.newaxis]
    for _ in range(n_steps):
        uc, V = stepper.advance_with_tangents(uc, V)
    u_final = uc
    tangent_final = V[0]

    eta_norms = []
    for a in amplitudes:
        vc = base.u0.coeffs + a * direction.coeffs
        for _ in range(n_steps):
            vc = stepper.advance(vc)
        eta = vc - u_final - a * tangent_final
        eta_norms.append(sobolev_norm(SpectralField(base.box, eta)))
    eta_norms = tuple(eta_norms)

    base_scale = max(sobolev_norm(SpectralField(base.box, u_final)), sobolev_norm(direction))
    floor = 1e-13 * max(base_scale, 1.0) * max(amplitudes)
    if max(eta_norms) <= floor:
        return FrechetReport(
            amplitudes=amplitudes,
            eta_norms=eta_norms,
            slope=float("nan"),
            residual=0.0,
            linear=True,
        )
    x = np.log(np.array(amplitudes))
    y = np.log(np.array(eta_norms))
    coeffs, res = np.polyfit(x, y, 1, full=True)[:2]
    residual = float(res[0]) if len(res) else 0.0
    return FrechetReport(
        amplitudes=amplitudes,
        eta_norms=eta_norms,
        slope=float(coeffs[0]),
        residual=residual,
        linear=False,
    )
