"""Time integration of the regularized momentum balance in Fourier space.

The evolution  du/dt = f - nu*A u - eps*A^l u - B(u, u)  is split so the
full linear part is integrated exactly through the per-mode factor
exp(-(nu |k|^2 + eps |k|^(2l)) dt); the nonlinear term and forcing are
advanced by the chosen explicit stage combination.  Two schemes are
provided: an integrating-factor Heun step (second order, transparent)
and a fourth-order exponential Runge-Kutta step whose phi-function
coefficients are evaluated by contour averaging for stability near
vanishing symbols.

Both steppers can carry a stack of tangent vectors along the base
trajectory, advanced with the exact derivative of the base update (the
stage values of the base flow are reused inside the linearized stages),
so the discrete solution map is differentiated exactly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from hvns.diagnostics import DiagnosticsRecord, make_record
from hvns.spectral import (
    BoxSpec,
    PhysicalParams,
    SpectralField,
    _advect_coeffs,
    _project_coeffs,
    max_speed,
)

__all__ = [
    "SCHEMES",
    "SimConfig",
    "SimState",
    "BlowUpError",
    "CFLWarning",
    "rhs",
    "step",
    "simulate",
    "linear_symbol",
]

SCHEMES = ("if_rk2", "etdrk4")
BLOWUP_THRESHOLD = 1e12


class BlowUpError(RuntimeError):
    """A coefficient left the trust region; the run is aborted."""


class CFLWarning(UserWarning):
    pass


def linear_symbol(box: BoxSpec, params: PhysicalParams) -> np.ndarray:
    """Per-mode decay rate nu |k|^2 + eps |k|^(2l)."""
    sym = params.nu * box.k_sq
    if params.eps != 0.0:
        sym = sym + params.eps * box.k_sq ** params.l
    return sym


@dataclass(frozen=True)
class SimState:
    t: float
    u: SpectralField
    step_index: int


@dataclass(frozen=True)
class SimConfig:
    """Everything a run needs: physics, initial state, and stepping."""

    params: PhysicalParams
    u0: SpectralField
    dt: float
    t_end: float
    output_every: int = 1
    scheme: str = "if_rk2"

    def __post_init__(self):
        errors = []
        if self.u0.box != self.params.box:
            errors.append("initial state and forcing live on different boxes")
        if not self.dt > 0:
            errors.append("time.dt must be positive")
        if self.t_end < 0:
            errors.append("time.t_end must be >= 0")
        if not isinstance(self.output_every, int) or self.output_every < 1:
            errors.append("time.output_every must be a positive integer")
        if self.scheme not in SCHEMES:
            errors.append(f"time.scheme must be one of {SCHEMES}")
        if errors:
            raise ValueError("; ".join(errors))
        n = self.t_end / self.dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ValueError("time.t_end must be an integer multiple of time.dt")
        scale = max(1.0, float(np.max(np.abs(self.u0.coeffs))))
        if self.u0.mean_defect() > 1e-12 * scale:
            raise ValueError("initial state must have zero mean")
        if self.u0.divergence_defect() > 1e-8 * scale * self.u0.box.k_max:
            raise ValueError("initial state must be solenoidal")

    @property
    def box(self) -> BoxSpec:
        return self.params.box

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    @cached_property
    def stepper(self):
        if self.scheme == "if_rk2":
            return _IFRK2(self.box, self.params, self.dt)
        return _ETDRK4(self.box, self.params, self.dt)


def rhs(u: SpectralField, params: PhysicalParams) -> SpectralField:
    """f - nu*A u - eps*A^l u - B(u, u), as a spectral field."""
    box = params.box
    c = params.forcing.coeffs - linear_symbol(box, params) * u.coeffs
    c = c - _project_coeffs(box, _advect_coeffs(box, u.coeffs, u.coeffs))
    c = np.array(c)
    c[(slice(None),) + box.origin] = 0.0
    return SpectralField(box, c)


class _StepperBase:
    def __init__(self, box: BoxSpec, params: PhysicalParams, dt: float):
        self.box = box
        self.params = params
        self.dt = dt
        self.sigma = linear_symbol(box, params)
        self.forcing = params.forcing.coeffs

    def _nonlin(self, uc: np.ndarray) -> np.ndarray:
        """f - B(u, u), projected, zero mean."""
        out = self.forcing - _project_coeffs(self.box, _advect_coeffs(self.box, uc, uc))
        out[(slice(None),) + self.box.origin] = 0.0
        return out

    def _lin(self, base_c: np.ndarray, v_c: np.ndarray) -> np.ndarray:
        """-B(base, v) - B(v, base), the derivative of _nonlin at base."""
        adv = _advect_coeffs(self.box, base_c, v_c) + _advect_coeffs(self.box, v_c, base_c)
        out = -_project_coeffs(self.box, adv)
        out[(slice(None),) + self.box.origin] = 0.0
        return out

    def _lin_stack(self, base_c: np.ndarray, vs: np.ndarray) -> np.ndarray:
        return np.stack([self._lin(base_c, vs[j]) for j in range(vs.shape[0])])


class _IFRK2(_StepperBase):
    """Integrating-factor Heun: exact linear factor, trapezoidal stages."""

    def __init__(self, box, params, dt):
        super().__init__(box, params, dt)
        self.E = np.exp(-self.sigma * dt)

    def advance(self, uc: np.ndarray) -> np.ndarray:
        n1 = self._nonlin(uc)
        mid = self.E * (uc + self.dt * n1)
        n2 = self._nonlin(mid)
        return self.E * uc + 0.5 * self.dt * (self.E * n1 + n2)

    def advance_with_tangents(self, uc: np.ndarray, vs: np.ndarray):
        n1 = self._nonlin(uc)
        l1 = self._lin_stack(uc, vs)
        mid = self.E * (uc + self.dt * n1)
        vmid = self.E * (vs + self.dt * l1)
        n2 = self._nonlin(mid)
        l2 = np.stack([self._lin(mid, vmid[j]) for j in range(vs.shape[0])])
        u_next = self.E * uc + 0.5 * self.dt * (self.E * n1 + n2)
        v_next = self.E * vs + 0.5 * self.dt * (self.E * l1 + l2)
        return u_next, v_next


class _ETDRK4(_StepperBase):
    """Fourth-order exponential scheme with contour-averaged coefficients."""

    CONTOUR_POINTS = 32

    def __init__(self, box, params, dt):
        super().__init__(box, params, dt)
        z = -self.sigma * dt
        self.E = np.exp(z)
        self.E2 = np.exp(z / 2.0)
        m = self.CONTOUR_POINTS
        # average the phi expressions over a unit circle around each z
        q = np.zeros_like(z)
        f1 = np.zeros_like(z)
        f2 = np.zeros_like(z)
        f3 = np.zeros_like(z)
        for r in np.exp(1j * np.pi * (np.arange(1, 2 * m, 2) / m)):
            lr = z + r
            elr = np.exp(lr)
            q += ((np.exp(lr / 2.0) - 1.0) / lr).real
            f1 += ((-4.0 - lr + elr * (4.0 - 3.0 * lr + lr ** 2)) / lr ** 3).real
            f2 += ((2.0 + lr + elr * (lr - 2.0)) / lr ** 3).real
            f3 += ((-4.0 - 3.0 * lr - lr ** 2 + elr * (4.0 - lr)) / lr ** 3).real
        self.Q = dt * q / m
        self.f1 = dt * f1 / m
        self.f2 = dt * f2 / m
        self.f3 = dt * f3 / m

    def advance(self, uc: np.ndarray) -> np.ndarray:
        nu0 = self._nonlin(uc)
        a = self.E2 * uc + self.Q * nu0
        na = self._nonlin(a)
        b = self.E2 * uc + self.Q * na
        nb = self._nonlin(b)
        c = self.E2 * a + self.Q * (2.0 * nb - nu0)
        nc = self._nonlin(c)
        return self.E * uc + self.f1 * nu0 + 2.0 * self.f2 * (na + nb) + self.f3 * nc

    def advance_with_tangents(self, uc: np.ndarray, vs: np.ndarray):
        nu0 = self._nonlin(uc)
        a = self.E2 * uc + self.Q * nu0
        na = self._nonlin(a)
        b = self.E2 * uc + self.Q * na
        nb = self._nonlin(b)
        c = self.E2 * a + self.Q * (2.0 * nb - nu0)
        nc = self._nonlin(c)
        u_next = self.E * uc + self.f1 * nu0 + 2.0 * self.f2 * (na + nb) + self.f3 * nc

        lv0 = self._lin_stack(uc, vs)
        av = self.E2 * vs + self.Q * lv0
        lva = np.stack([self._lin(a, av[j]) for j in range(vs.shape[0])])
        bv = self.E2 * vs + self.Q * lva
        lvb = np.stack([self._lin(b, bv[j]) for j in range(vs.shape[0])])
        cv = self.E2 * av + self.Q * (2.0 * lvb - lv0)
        lvc = np.stack([self._lin(c, cv[j]) for j in range(vs.shape[0])])
        v_next = self.E * vs + self.f1 * lv0 + 2.0 * self.f2 * (lva + lvb) + self.f3 * lvc
        return u_next, v_next


def check_state(box: BoxSpec, uc: np.ndarray, step_index: int, t: float) -> None:
    """Invariant checks applied after every step."""
    amax = float(np.max(np.abs(uc)))
    if not np.isfinite(amax) or amax > BLOWUP_THRESHOLD:
        flat = np.abs(uc)
        flat = np.where(np.isfinite(flat), flat, np.inf)
        idx = np.unravel_index(int(np.argmax(flat)), uc.shape)
        kmag = float(np.sqrt(box.k_sq[idx[1:]]))
        raise BlowUpError(
            f"blow-up at step {step_index} (t={t:g}): max |coeff| = {amax:g} at |k| = {kmag:g}"
        )
    mean = float(np.max(np.abs(uc[(slice(None),) + box.origin])))
    if mean > 1e-10 * max(1.0, amax):
        raise RuntimeError(f"zero-mean invariant violated at step {step_index}: |c(0)| = {mean:g}")
    div = np.einsum("i...,i...->...", box.k_full, uc)
    dmax = float(np.max(np.abs(div)))
    if dmax > 1e-7 * max(1.0, amax) * max(1.0, box.k_max):
        raise RuntimeError(
            f"solenoidality invariant violated at step {step_index}: max |k.c| = {dmax:g}"
        )


def step(state: SimState, config: SimConfig) -> SimState:
    """Advance one step of size config.dt with invariant checks."""
    uc = config.stepper.advance(state.u.coeffs)
    new_index = state.step_index + 1
    t = new_index * config.dt
    check_state(config.box, uc, new_index, t)
    return SimState(t=t, u=SpectralField(config.box, uc), step_index=new_index)


def simulate(
    config: SimConfig,
    record_sink=None,
    state_sink=None,
    start: SimState | None = None,
) -> SimState:
    """Run from t = 0 (or a resumed state) to t_end.

    Every output_every-th step (plus the initial and final states) a
    DiagnosticsRecord is passed to record_sink and the full state to
    state_sink.  The budget residual in each record integrates the
    dissipation and injection columns between consecutive samples with
    the trapezoid rule; the first emitted record carries 0.  The CFL
    number dt * max|u| * k_max is checked at sampling times and a
    CFLWarning is issued once if it exceeds 1.
    """
    box = config.box
    stepper = config.stepper
    if start is None:
        state = SimState(t=0.0, u=config.u0, step_index=0)
    else:
        if start.u.box != box:
            raise ValueError("resume state lives on a different box")
        state = start
    uc = state.u.coeffs
    n_steps = config.n_steps
    prev = None
    cfl_warned = False

    def emit(t: float, coeffs: np.ndarray, step_index: int):
        nonlocal prev, cfl_warned
        rec = make_record(box, config.params, t, coeffs, prev)
        prev = rec
        if record_sink is not None:
            record_sink(rec)
        if state_sink is not None:
            state_sink(SimState(t=t, u=SpectralField(box, coeffs), step_index=step_index))
        if not cfl_warned:
            cfl = config.dt * max_speed(SpectralField(box, coeffs)) * box.k_max
            if cfl > 1.0:
                warnings.warn(
                    f"CFL number {cfl:.3g} exceeds 1 at t={t:g}; reduce time.dt",
                    CFLWarning,
                    stacklevel=2,
                )
                cfl_warned = True

    emit(state.t, uc, state.step_index)
    for step_index in range(state.step_index + 1, n_steps + 1):
        uc = stepper.advance(uc)
        t = step_index * config.dt
        check_state(box, uc, step_index, t)
        if step_index % config.output_every == 0 or step_index == n_steps:
            emit(t, uc, step_index)
    return SimState(t=n_steps * config.dt, u=SpectralField(box, uc), step_index=n_steps)
