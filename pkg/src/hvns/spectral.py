"""Fourier-space representation of periodic incompressible velocity fields.

A field is stored as the array of continuous Fourier-series coefficients
u_hat(k) of a real vector field on the box (0, L)^d, on the integer mode
lattice k = (2*pi/L) * n with |n_i| <= N/2, in numpy FFT ordering.  With
this normalization Parseval reads

    int |u|^2 dx = L^d * sum_k |u_hat(k)|^2,

which pins down every norm constant used below.  Nyquist modes
(|n_i| = N/2) are always zero, and quadratic products are dealiased by
strict 2/3 truncation: modes with any |n_i| >= N/3 are dropped, so the
retained coefficients of a pointwise product of two retained fields are
exact (no aliasing) and grid quadrature of triple products of retained
fields is exact as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "BoxSpec",
    "SpectralField",
    "PhysicalParams",
    "BoxMismatchError",
    "dealias",
    "leray_project",
    "apply_stokes_power",
    "sobolev_norm",
    "coeff_norm_sq",
    "inner_product",
    "trilinear_b",
    "nonlinear_B",
    "max_speed",
    "random_solenoidal",
    "single_mode_field",
    "stokes_eigenfields",
    "perp_basis",
    "gram_matrix",
    "gram_defect",
    "mgs_orthonormalize",
]


class BoxMismatchError(ValueError):
    """Operands live on different boxes or have inconsistent shapes."""


@dataclass(frozen=True)
class BoxSpec:
    """Periodic box (0, L)^d sampled with N points per side.

    The smallest eigenvalue of the (negative) Laplacian on zero-mean
    fields is lambda1 = (2*pi/L)^2; all wavenumbers are integer
    multiples of k_unit = 2*pi/L.
    """

    d: int
    L: float
    N: int

    def __post_init__(self):
        errors = []
        if self.d not in (2, 3):
            errors.append("box.d must be 2 or 3")
        if not isinstance(self.N, int) or self.N < 8 or self.N % 2 != 0:
            errors.append("box.N must be an even integer >= 8")
        if not (isinstance(self.L, (int, float)) and self.L > 0):
            errors.append("box.L must be positive")
        if errors:
            raise ValueError("; ".join(errors))

    @property
    def grid_shape(self) -> tuple:
        return (self.N,) * self.d

    @property
    def volume(self) -> float:
        return float(self.L) ** self.d

    @property
    def cell_volume(self) -> float:
        return (float(self.L) / self.N) ** self.d

    @property
    def k_unit(self) -> float:
        return 2.0 * math.pi / self.L

    @property
    def lambda1(self) -> float:
        return self.k_unit ** 2

    @cached_property
    def modes(self) -> np.ndarray:
        """Integer mode numbers along one axis, FFT ordering."""
        return np.fft.fftfreq(self.N, 1.0 / self.N).astype(np.int64)

    @cached_property
    def n_cut(self) -> int:
        """Largest |n_i| kept by the dealias mask (strict 2/3 rule)."""
        cut = int(np.max(np.abs(self.modes[np.abs(self.modes) < self.N / 3.0])))
        return cut

    @property
    def k_max(self) -> float:
        """Largest retained wavenumber component, used for CFL estimates."""
        return self.k_unit * self.n_cut

    @cached_property
    def k_full(self) -> np.ndarray:
        """Wavenumber components, shape (d,) + grid_shape."""
        k1 = self.k_unit * self.modes.astype(np.float64)
        axes = np.meshgrid(*([k1] * self.d), indexing="ij")
        return np.stack(axes)

    @cached_property
    def k_sq(self) -> np.ndarray:
        return np.sum(self.k_full ** 2, axis=0)

    @cached_property
    def _ksq_inv(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            inv = np.where(self.k_sq > 0.0, self.k_sq, 1.0)
        return np.where(self.k_sq > 0.0, 1.0 / inv, 0.0)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Boolean mask keeping modes with every |n_i| < N/3."""
        keep1 = np.abs(self.modes) < self.N / 3.0
        mask = keep1
        for _ in range(self.d - 1):
            mask = mask[..., None] & keep1
        return mask

    @cached_property
    def nyquist_free_mask(self) -> np.ndarray:
        keep1 = np.abs(self.modes) != self.N // 2
        mask = keep1
        for _ in range(self.d - 1):
            mask = mask[..., None] & keep1
        return mask

    @cached_property
    def _reflect_index(self) -> tuple:
        idx = (-np.arange(self.N)) % self.N
        return np.ix_(*([idx] * self.d))

    def reflect(self, coeffs: np.ndarray) -> np.ndarray:
        """Coefficient array evaluated at -k, component axes preserved."""
        lead = (slice(None),) * (coeffs.ndim - self.d)
        return coeffs[lead + self._reflect_index]

    def grid(self) -> list:
        """Dense physical coordinate arrays, shape grid_shape each."""
        x1 = np.arange(self.N) * (self.L / self.N)
        return list(np.meshgrid(*([x1] * self.d), indexing="ij"))

    @property
    def origin(self) -> tuple:
        return (0,) * self.d


def _spatial_axes(box: BoxSpec, arr: np.ndarray) -> tuple:
    return tuple(range(arr.ndim - box.d, arr.ndim))


def _to_phys(box: BoxSpec, coeffs: np.ndarray) -> np.ndarray:
    """Grid values of the field with the given series coefficients."""
    axes = _spatial_axes(box, coeffs)
    return np.fft.ifftn(coeffs, axes=axes).real * float(box.N ** box.d)


def _to_coeffs(box: BoxSpec, values: np.ndarray) -> np.ndarray:
    axes = _spatial_axes(box, values)
    return np.fft.fftn(values, axes=axes) / float(box.N ** box.d)


@dataclass(frozen=True)
class SpectralField:
    """Truncated Fourier coefficients of a real periodic vector field.

    coeffs[c, n1, ..., nd] is the series coefficient of component c at
    integer mode (n1, ..., nd), numpy FFT ordering along each axis.
    Fields are treated as immutable values; every operation returns a
    new instance.
    """

    box: BoxSpec
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128)
        expected = (self.box.d,) + self.box.grid_shape
        if c.shape != expected:
            raise BoxMismatchError(
                f"coefficient array shape {c.shape} does not match box shape {expected}"
            )
        object.__setattr__(self, "coeffs", c)

    # -- constructors ---------------------------------------------------

    @classmethod
    def zeros(cls, box: BoxSpec) -> "SpectralField":
        return cls(box, np.zeros((box.d,) + box.grid_shape, dtype=np.complex128))

    @classmethod
    def from_physical(cls, box: BoxSpec, values: np.ndarray) -> "SpectralField":
        """Transform grid samples of a real vector field.

        The mean and the Nyquist modes are zeroed, so a round trip
        through to_physical reproduces the input only up to those
        (deliberately excluded) components.
        """
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (box.d,) + box.grid_shape:
            raise BoxMismatchError(
                f"physical array shape {values.shape} does not match box"
            )
        c = _to_coeffs(box, values)
        c *= box.nyquist_free_mask
        c[(slice(None),) + box.origin] = 0.0
        return cls(box, c)

    # -- conversions -----------------------------------------------------

    def to_physical(self) -> np.ndarray:
        """Real grid samples, shape (d,) + grid_shape."""
        return _to_phys(self.box, self.coeffs)

    # -- arithmetic (new instances, same box) -----------------------------

    def _wrap(self, coeffs: np.ndarray) -> "SpectralField":
        return SpectralField(self.box, coeffs)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _require_same_box(self, other)
        return self._wrap(self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _require_same_box(self, other)
        return self._wrap(self.coeffs - other.coeffs)

    def __neg__(self) -> "SpectralField":
        return self._wrap(-self.coeffs)

    def __mul__(self, scalar) -> "SpectralField":
        return self._wrap(self.coeffs * float(scalar))

    __rmul__ = __mul__

    # -- structural defects (exact zero in an ideal field) ----------------

    def hermitian_defect(self) -> float:
        return float(np.max(np.abs(self.coeffs - np.conj(self.box.reflect(self.coeffs)))))

    def mean_defect(self) -> float:
        return float(np.max(np.abs(self.coeffs[(slice(None),) + self.box.origin])))

    def divergence_defect(self) -> float:
        div = np.einsum("i...,i...->...", self.box.k_full, self.coeffs)
        return float(np.max(np.abs(div)))


def _require_same_box(*fields: SpectralField) -> BoxSpec:
    box = fields[0].box
    for f in fields[1:]:
        if f.box != box:
            raise BoxMismatchError(f"boxes differ: {f.box} vs {box}")
    return box


@dataclass(frozen=True)
class PhysicalParams:
    """Viscosity nu, hyperviscosity strength eps and order l, body force.

    The forcing must be a solenoidal zero-mean field on the same box the
    run uses; it is validated here once and never mutated.
    """

    nu: float
    eps: float
    l: float
    forcing: SpectralField

    def __post_init__(self):
        errors = []
        if not self.nu > 0:
            errors.append("params.nu must be positive")
        if self.eps < 0:
            errors.append("params.eps must be >= 0")
        if self.l < 1:
            errors.append("params.l must be >= 1")
        if errors:
            raise ValueError("; ".join(errors))
        f = self.forcing
        scale = max(1.0, float(np.max(np.abs(f.coeffs))))
        if f.mean_defect() > 1e-12 * scale:
            raise ValueError("forcing must have zero mean")
        if f.divergence_defect() > 1e-8 * scale * f.box.k_max:
            raise ValueError("forcing must be solenoidal")
        if f.hermitian_defect() > 1e-10 * scale:
            raise ValueError("forcing coefficients must have Hermitian symmetry")

    @property
    def box(self) -> BoxSpec:
        return self.forcing.box

    def forcing_norm(self) -> float:
        return sobolev_norm(self.forcing, 0.0)


# ---------------------------------------------------------------------------
# projections and multipliers


def dealias(u: SpectralField) -> SpectralField:
    """Strict 2/3-rule truncation (drop modes with any |n_i| >= N/3)."""
    return SpectralField(u.box, u.coeffs * u.box.dealias_mask)


def _project_coeffs(box: BoxSpec, c: np.ndarray) -> np.ndarray:
    kdotc = np.einsum("i...,i...->...", box.k_full, c)
    return c - box.k_full * (kdotc * box._ksq_inv)[None]


def leray_project(u: SpectralField) -> SpectralField:
    """Project out the gradient part: c(k) <- (I - k k^T / |k|^2) c(k).

    The k = 0 coefficient is left untouched (it is zero for the
    zero-mean fields used everywhere here).
    """
    return SpectralField(u.box, _project_coeffs(u.box, u.coeffs))


def _ksq_power(box: BoxSpec, s: float) -> np.ndarray:
    """|k|^(2s) with the origin mapped to zero (fractional s allowed)."""
    base = np.where(box.k_sq > 0.0, box.k_sq, 1.0)
    return np.where(box.k_sq > 0.0, base ** s, 0.0)


def apply_stokes_power(u: SpectralField, s: float) -> SpectralField:
    """Per-mode multiplication by |k|^(2s); s = 0 is the exact identity."""
    if s == 0:
        return u
    return SpectralField(u.box, u.coeffs * _ksq_power(u.box, s))


# ---------------------------------------------------------------------------
# norms and inner products


def coeff_norm_sq(box: BoxSpec, coeffs: np.ndarray, s: float = 0.0) -> float:
    """Squared Sobolev-scale norm of a raw coefficient array."""
    e = np.sum(np.abs(coeffs) ** 2, axis=0)
    if s != 0:
        e = e * _ksq_power(box, s)
    return box.volume * float(np.sum(e))


def sobolev_norm(u: SpectralField, s: float = 0.0) -> float:
    """sqrt( L^d * sum_k |k|^(2s) |u_hat(k)|^2 ).

    s = 0 is the L2 norm, s = 1 equals the L2 norm of the gradient,
    s = 1/2 the Stokes form; fractional s is supported directly.
    """
    return math.sqrt(coeff_norm_sq(u.box, u.coeffs, s))


def inner_product(u: SpectralField, v: SpectralField) -> float:
    """L2 inner product int u . v dx (real for Hermitian fields)."""
    box = _require_same_box(u, v)
    return box.volume * float(np.sum((np.conj(u.coeffs) * v.coeffs).real))


def max_speed(u: SpectralField) -> float:
    """Pointwise maximum of |u| on the sampling grid."""
    phys = u.to_physical()
    return float(np.sqrt(np.max(np.sum(phys ** 2, axis=0))))


# ---------------------------------------------------------------------------
# nonlinearity


def _advect_coeffs(box: BoxSpec, uc: np.ndarray, vc: np.ndarray) -> np.ndarray:
    """Dealiased coefficients of (u . grad) v, no projection."""
    mask = box.dealias_mask
    up = _to_phys(box, uc * mask)
    gradv = _to_phys(box, 1j * box.k_full[:, None] * (vc * mask)[None, :])
    adv = np.einsum("i...,ij...->j...", up, gradv)
    out = _to_coeffs(box, adv)
    out *= mask
    return out


def nonlinear_B(u: SpectralField, v: SpectralField) -> SpectralField:
    """Leray-projected, dealiased advection term B(u, v) = P (u . grad) v.

    Inputs are truncated by the 2/3 mask before the pointwise product, so
    the retained modes of the result carry no aliasing error.
    """
    box = _require_same_box(u, v)
    c = _project_coeffs(box, _advect_coeffs(box, u.coeffs, v.coeffs))
    c[(slice(None),) + box.origin] = 0.0
    return SpectralField(box, c)


def trilinear_b(u: SpectralField, v: SpectralField, w: SpectralField) -> float:
    """b(u, v, w) = sum_ij int u_i (d v_j / d x_i) w_j dx.

    Evaluated by grid quadrature of the dealiased factors; with the
    strict 2/3 mask the cubic quadrature is exact, so the solenoidal
    identities b(u,u,u) = 0 and b(u,v,w) = -b(u,w,v) hold to round-off.
    """
    box = _require_same_box(u, v, w)
    mask = box.dealias_mask
    up = _to_phys(box, u.coeffs * mask)
    wp = _to_phys(box, w.coeffs * mask)
    gradv = _to_phys(box, 1j * box.k_full[:, None] * (v.coeffs * mask)[None, :])
    integrand = np.einsum("i...,ij...,j...->...", up, gradv, wp)
    return box.cell_volume * float(np.sum(integrand))


# ---------------------------------------------------------------------------
# field construction


def perp_basis(n, d: int) -> list:
    """Deterministic orthonormal basis of the plane normal to lattice vector n."""
    n = np.asarray(n, dtype=np.float64)
    if d == 2:
        t = np.array([-n[1], n[0]]) / np.linalg.norm(n)
        return [t]
    j = int(np.argmin(np.abs(n)))
    e = np.zeros(3)
    e[j] = 1.0
    t1 = np.cross(n, e)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(n / np.linalg.norm(n), t1)
    return [t1, t2]


def single_mode_field(
    box: BoxSpec,
    n,
    direction=None,
    amplitude: float = 1.0,
    phase: str = "cos",
) -> SpectralField:
    """amplitude * direction * cos(k.x) (or sin), k = k_unit * n.

    direction defaults to a vector perpendicular to n, which makes the
    field solenoidal; passing a non-perpendicular direction is allowed
    (useful for building gradient test fields).
    """
    n = tuple(int(v) for v in n)
    if len(n) != box.d:
        raise ValueError(f"mode {n} does not match box dimension {box.d}")
    if all(v == 0 for v in n):
        raise ValueError("mode must be nonzero")
    if any(abs(v) >= box.N // 2 for v in n):
        raise ValueError(f"mode {n} is at or beyond the Nyquist limit N/2")
    if direction is None:
        direction = perp_basis(n, box.d)[0]
    direction = np.asarray(direction, dtype=np.float64)
    c = np.zeros((box.d,) + box.grid_shape, dtype=np.complex128)
    plus = tuple(v % box.N for v in n)
    minus = tuple((-v) % box.N for v in n)
    a = 0.5 * amplitude * direction
    if phase == "cos":
        c[(slice(None),) + plus] = a
        c[(slice(None),) + minus] += a
    elif phase == "sin":
        c[(slice(None),) + plus] = -1j * a
        c[(slice(None),) + minus] += 1j * a
    else:
        raise ValueError("phase must be 'cos' or 'sin'")
    return SpectralField(box, c)


def random_solenoidal(
    box: BoxSpec,
    seed: int = 0,
    gamma: float = 2.0,
    k_cut: float | None = None,
    amplitude: float = 1.0,
) -> SpectralField:
    """Random smooth solenoidal field with a prescribed spectral envelope.

    Gaussian coefficients are shaped by |k|^(-gamma) * exp(-|k|^2/k_cut^2),
    Hermitian-symmetrized, dealiased, projected, and rescaled so the L2
    norm equals `amplitude`.  Identical (box, seed, gamma, k_cut,
    amplitude) always reproduce the same field.
    """
    rng = np.random.default_rng(seed)
    shape = (box.d,) + box.grid_shape
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    kc = float(k_cut) if k_cut is not None else 0.5 * box.k_max
    envelope = np.where(
        box.k_sq > 0.0,
        _ksq_power(box, -gamma / 2.0) * np.exp(-box.k_sq / kc ** 2),
        0.0,
    )
    c *= envelope
    c = 0.5 * (c + np.conj(box.reflect(c)))
    c *= box.dealias_mask
    c = _project_coeffs(box, c)
    c[(slice(None),) + box.origin] = 0.0
    nrm = math.sqrt(coeff_norm_sq(box, c))
    if nrm > 0.0 and amplitude != 0.0:
        c *= amplitude / nrm
    else:
        c *= 0.0
    return SpectralField(box, c)


def stokes_eigenfields(box: BoxSpec, count: int):
    """First `count` L2-orthonormal solenoidal eigenfields of -Laplacian.

    Returns (fields, eigenvalues) ordered by increasing eigenvalue with a
    deterministic tie-break; each lattice mode pair contributes a cos and
    a sin field per perpendicular direction.  Only modes inside the
    dealias cutoff are enumerated.
    """
    reps = []
    rng_range = range(-box.n_cut, box.n_cut + 1)
    for n in np.ndindex(*([len(rng_range)] * box.d)):
        vec = tuple(rng_range[i] for i in n)
        if all(v == 0 for v in vec):
            continue
        nz = next(v for v in vec if v != 0)
        if nz < 0:
            continue
        reps.append(vec)
    reps.sort(key=lambda v: (sum(x * x for x in v), v))
    amp = math.sqrt(2.0 / box.volume)
    fields, eigenvalues = [], []
    for vec in reps:
        lam = box.lambda1 * sum(x * x for x in vec)
        for direction in perp_basis(vec, box.d):
            for phase in ("cos", "sin"):
                fields.append(
                    single_mode_field(box, vec, direction=direction, amplitude=amp, phase=phase)
                )
                eigenvalues.append(lam)
                if len(fields) == count:
                    return fields, np.asarray(eigenvalues)
    raise ValueError(
        f"requested {count} eigenfields but only {len(fields)} fit inside the dealias cutoff"
    )


# ---------------------------------------------------------------------------
# orthonormal families


def gram_matrix(box: BoxSpec, stack: np.ndarray) -> np.ndarray:
    """Pairwise L2 inner products of a stack of coefficient arrays."""
    m = stack.shape[0]
    flat = stack.reshape(m, -1)
    return box.volume * (np.conj(flat) @ flat.T).real


def gram_defect(box: BoxSpec, stack: np.ndarray) -> float:
    g = gram_matrix(box, stack)
    return float(np.max(np.abs(g - np.eye(stack.shape[0]))))


def mgs_orthonormalize(box: BoxSpec, stack: np.ndarray):
    """Modified Gram-Schmidt in L2 on a stack of coefficient arrays.

    Returns (orthonormal stack, diagonal norms).  The j-th diagonal norm
    is the residual length of vector j after removing components along
    vectors 0..j-1, the quantity whose running log gives stretching
    rates.
    """
    m = stack.shape[0]
    out = np.array(stack, dtype=np.complex128, copy=True)
    flat = out.reshape(m, -1)
    diag = np.empty(m)
    for j in range(m):
        for i in range(j):
            proj = box.volume * np.sum((np.conj(flat[i]) * flat[j]).real)
            flat[j] -= proj * flat[i]
        nrm = math.sqrt(box.volume * float(np.sum(np.abs(flat[j]) ** 2)))
        if nrm == 0.0:
            raise ValueError(f"vector {j} is linearly dependent, cannot orthonormalize")
        flat[j] /= nrm
        diag[j] = nrm
    return out, diag
