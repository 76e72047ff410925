"""Fourier representation of zero-mean real vector fields on the 4-torus.

Fields are stored as Fourier-series coefficients on the full ``n**4`` lattice,

    u(x) = sum_k u_hat(k) exp(i k.x),

so ``u_hat = fftn(u) / n**4``. Physical integrals carry the box volume
``L**4``; with that normalization ``int |u|^2 dx = L**4 * sum |u_hat|^2``.

Array kernels (``_``-prefixed) accept arbitrary leading batch axes in front
of the ``(4, n, n, n, n)`` component/lattice block so tangent frames can be
pushed through the same code path as single fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

AXES = (-4, -3, -2, -1)
DIM = 4

# (i, j) pairs for the 10 independent entries of a symmetric 4x4 tensor
SYM_PAIRS = [(i, j) for i in range(DIM) for j in range(i, DIM)]


class GridMismatchError(ValueError):
    pass


class NotSolenoidalError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class WaveGrid:
    """Discrete Fourier lattice of the 4-torus ``[0, L)^4``.

    ``modes`` holds the integer wave indices ``m`` (FFT ordering); the
    physical wavevector is ``k = 2*pi/L * m``. The dealias mask keeps
    sites with every ``|m_j| < n/3``.
    """

    n_per_dim: int
    box_length: float = 2 * np.pi

    def __post_init__(self):
        n = self.n_per_dim
        if not isinstance(n, (int, np.integer)) or n < 8 or n % 2:
            raise ValueError(f"n_per_dim must be an even integer >= 8, got {n!r}")
        if not self.box_length > 0:
            raise ValueError(f"box_length must be positive, got {self.box_length!r}")

    def __eq__(self, other):
        return (isinstance(other, WaveGrid) and self.n_per_dim == other.n_per_dim
                and self.box_length == other.box_length)

    def __hash__(self):
        return hash((self.n_per_dim, self.box_length))

    @property
    def shape(self):
        return (self.n_per_dim,) * DIM

    @property
    def volume(self) -> float:
        return float(self.box_length) ** DIM

    @property
    def k0(self) -> float:
        return 2 * np.pi / self.box_length

    @cached_property
    def mode_1d(self) -> np.ndarray:
        n = self.n_per_dim
        return np.rint(np.fft.fftfreq(n) * n).astype(np.int64)

    @cached_property
    def modes(self) -> np.ndarray:
        """Integer wave indices, shape ``(4, n, n, n, n)``."""
        return np.stack(np.meshgrid(*([self.mode_1d] * DIM), indexing="ij"))

    @cached_property
    def wavevectors(self) -> np.ndarray:
        return self.k0 * self.modes.astype(float)

    @cached_property
    def k2(self) -> np.ndarray:
        return np.sum(self.wavevectors**2, axis=0)

    @cached_property
    def inv_k2(self) -> np.ndarray:
        """``1/|k|^2`` with the ``k = 0`` site set to 0."""
        k2 = self.k2
        out = np.zeros_like(k2)
        np.divide(1.0, k2, out=out, where=k2 > 0)
        return out

    @cached_property
    def zero_site(self) -> tuple:
        return (0,) * DIM

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        # strict inequality: 3 * kmax < n keeps quadratic products alias-free
        # and makes cubic grid quadratures exact
        m = np.abs(self.modes)
        return np.all(3 * m < self.n_per_dim, axis=0)

    @cached_property
    def nyquist_free(self) -> np.ndarray:
        """False on the planes ``|m_j| = n/2``, where ``-k`` aliases onto ``k``."""
        return np.all(np.abs(self.modes) < self.n_per_dim // 2, axis=0)

    @cached_property
    def kmax(self) -> int:
        return int(np.max(np.abs(self.modes)[:, self.dealias_mask]))

    @cached_property
    def _half_wavevectors(self) -> np.ndarray:
        h = self.n_per_dim // 2 + 1
        return self.wavevectors[..., :h]

    @cached_property
    def _half_mask(self) -> np.ndarray:
        h = self.n_per_dim // 2 + 1
        return self.dealias_mask[..., :h]

    @cached_property
    def _neg_index(self) -> np.ndarray:
        n = self.n_per_dim
        return (-np.arange(n)) % n

    @cached_property
    def coords(self) -> np.ndarray:
        """Physical grid coordinates, shape ``(4, n, n, n, n)``."""
        x = np.arange(self.n_per_dim) * (self.box_length / self.n_per_dim)
        return np.stack(np.meshgrid(*([x] * DIM), indexing="ij"))

    def site(self, m) -> tuple:
        """Array index of the lattice site with integer wave index ``m``."""
        m = tuple(int(v) for v in m)
        if len(m) != DIM:
            raise ValueError(f"wave index must have {DIM} entries, got {m}")
        n = self.n_per_dim
        if any(abs(v) >= n // 2 for v in m):
            raise ValueError(f"wave index {m} outside the resolved lattice")
        return tuple(v % n for v in m)


def make_grid(n_per_dim: int, box_length: float = 2 * np.pi) -> WaveGrid:
    return WaveGrid(n_per_dim, box_length)


# ---------------------------------------------------------------------------
# array kernels


def _flip_k(grid: WaveGrid, a: np.ndarray) -> np.ndarray:
    """Return ``a(-k)`` for an array whose last four axes are the lattice."""
    idx = grid._neg_index
    for ax in AXES:
        a = np.take(a, idx, axis=ax)
    return a


def _expand_half(grid: WaveGrid, half: np.ndarray) -> np.ndarray:
    """Rebuild the full Hermitian lattice from an ``rfftn`` half-spectrum."""
    n = grid.n_per_dim
    h = n // 2 + 1
    full = np.empty(half.shape[:-1] + (n,), dtype=complex)
    full[..., :h] = half
    tail = half[..., 1:n // 2][..., ::-1]
    idx = grid._neg_index
    for ax in (-4, -3, -2):
        tail = np.take(tail, idx, axis=ax)
    full[..., h:] = np.conj(tail)
    return full


def _to_physical(grid: WaveGrid, coeffs: np.ndarray) -> np.ndarray:
    h = grid.n_per_dim // 2 + 1
    return sfft.irfftn(coeffs[..., :h], s=grid.shape, axes=AXES, norm="forward")


def _half_from_physical(grid: WaveGrid, f: np.ndarray) -> np.ndarray:
    return sfft.rfftn(f, axes=AXES, norm="forward")


def _from_physical(grid: WaveGrid, f: np.ndarray) -> np.ndarray:
    return _expand_half(grid, _half_from_physical(grid, f))


def _project(grid: WaveGrid, c: np.ndarray) -> np.ndarray:
    k = grid.wavevectors
    kdotc = np.sum(k * c, axis=-5)
    return c - k * (kdotc * grid.inv_k2)[..., None, :, :, :, :]


def _divergence(grid: WaveGrid, c: np.ndarray) -> np.ndarray:
    return 1j * np.sum(grid.wavevectors * c, axis=-5)


def _gradient(grid: WaveGrid, c: np.ndarray) -> np.ndarray:
    """Spectral gradient ``i k_j c_i``; output axis ``-6`` is ``i``, ``-5`` is ``j``."""
    return 1j * c[..., :, None, :, :, :, :] * grid.wavevectors


def _div_symmetric(grid: WaveGrid, prod_half: np.ndarray) -> np.ndarray:
    """``(div T)_i = i k_j T_ij`` on half-spectra of the 10 symmetric entries."""
    k = grid._half_wavevectors
    out = np.zeros(prod_half.shape[:-5] + (DIM,) + prod_half.shape[-4:], dtype=complex)
    for p, (i, j) in enumerate(SYM_PAIRS):
        t = prod_half[..., p, :, :, :, :]
        out[..., i, :, :, :, :] += 1j * k[j] * t
        if i != j:
            out[..., j, :, :, :, :] += 1j * k[i] * t
    return out


def _nonlinear(grid: WaveGrid, c: np.ndarray) -> np.ndarray:
    """Dealiased ``div(u (x) u)`` for coefficient array(s) ``c``."""
    u = _to_physical(grid, c)
    prods = np.stack([u[..., i, :, :, :, :] * u[..., j, :, :, :, :] for i, j in SYM_PAIRS], axis=-5)
    div = _div_symmetric(grid, _half_from_physical(grid, prods))
    div *= grid._half_mask
    return _expand_half(grid, div)


def _nonlinear_sym(grid: WaveGrid, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dealiased ``div(a (x) b + b (x) a)``; ``a`` broadcasts against ``b``."""
    pa = _to_physical(grid, a)
    pb = _to_physical(grid, b)
    prods = np.stack(
        [pa[..., i, :, :, :, :] * pb[..., j, :, :, :, :] + pb[..., i, :, :, :, :] * pa[..., j, :, :, :, :]
         for i, j in SYM_PAIRS],
        axis=-5,
    )
    div = _div_symmetric(grid, _half_from_physical(grid, prods))
    div *= grid._half_mask
    return _expand_half(grid, div)


def _l2_inner(grid: WaveGrid, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return grid.volume * np.sum((a * np.conj(b)).real, axis=(-5,) + AXES)


def _h1_inner(grid: WaveGrid, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return grid.volume * np.sum((a * np.conj(b)).real * grid.k2, axis=(-5,) + AXES)


# ---------------------------------------------------------------------------
# fields


@dataclass(frozen=True, eq=False)
class SpectralVectorField:
    """Real 4-component vector field held as Fourier coefficients.

    ``coeffs`` has shape ``(4, n, n, n, n)``. Instances are treated as values:
    operations return new fields and never write into ``coeffs``.
    """

    grid: WaveGrid
    coeffs: np.ndarray
    solenoidal: bool = False

    def __post_init__(self):
        expected = (DIM,) + self.grid.shape
        if self.coeffs.shape != expected:
            raise ValueError(f"coeffs shape {self.coeffs.shape} != {expected}")

    @classmethod
    def zeros(cls, grid: WaveGrid) -> "SpectralVectorField":
        return cls(grid, np.zeros((DIM,) + grid.shape, dtype=complex), solenoidal=True)

    @classmethod
    def from_physical(cls, grid: WaveGrid, values: np.ndarray, solenoidal: bool = False):
        values = np.asarray(values, dtype=float)
        return cls(grid, _from_physical(grid, values), solenoidal=solenoidal)

    @classmethod
    def from_modes(cls, grid: WaveGrid, modes, project: bool = False) -> "SpectralVectorField":
        """Build a field from ``[(m, amplitude), ...]`` with ``m`` an integer
        wave index; the conjugate site ``-m`` is filled automatically."""
        c = np.zeros((DIM,) + grid.shape, dtype=complex)
        for m, amp in modes:
            amp = np.asarray(amp, dtype=complex)
            s, sn = grid.site(m), grid.site(tuple(-int(v) for v in m))
            if s == sn:
                raise ValueError(f"mode {tuple(m)} is self-conjugate")
            c[(slice(None),) + s] += amp
            c[(slice(None),) + sn] += np.conj(amp)
        f = cls(grid, c)
        return leray_project(f) if project else f

    def to_physical(self) -> np.ndarray:
        return _to_physical(self.grid, self.coeffs)

    def _check(self, other):
        if not isinstance(other, SpectralVectorField):
            return NotImplemented
        check_same_grid(self, other)

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return SpectralVectorField(self.grid, self.coeffs + other.coeffs,
                                   self.solenoidal and other.solenoidal)

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return SpectralVectorField(self.grid, self.coeffs - other.coeffs,
                                   self.solenoidal and other.solenoidal)

    def __mul__(self, s):
        if not np.isscalar(s) or isinstance(s, complex):
            return NotImplemented
        return SpectralVectorField(self.grid, self.coeffs * float(s), self.solenoidal)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralVectorField(self.grid, -self.coeffs, self.solenoidal)

    def __truediv__(self, s):
        return self * (1.0 / s)

    def with_coeffs(self, coeffs, solenoidal=None):
        return SpectralVectorField(self.grid, coeffs,
                                   self.solenoidal if solenoidal is None else solenoidal)


def check_same_grid(*fields):
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GridMismatchError(
                f"grid mismatch: n={f.grid.n_per_dim}, L={f.grid.box_length} vs "
                f"n={g.n_per_dim}, L={g.box_length}")


def hermitian_defect(f: SpectralVectorField) -> float:
    """``max |u_hat(-k) - conj(u_hat(k))|`` relative to ``max |u_hat|``."""
    c = f.coeffs
    scale = np.max(np.abs(c))
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(_flip_k(f.grid, c) - np.conj(c))) / scale)


def divergence_defect(f: SpectralVectorField) -> float:
    """``max_k |k.u_hat(k)| / |k||u_hat(k)|`` over nonzero sites."""
    k = f.grid.wavevectors
    c = f.coeffs
    amp = np.sqrt(np.sum(np.abs(c) ** 2, axis=0) * f.grid.k2)
    kdotc = np.abs(np.sum(k * c, axis=0))
    nz = amp > 1e-300
    if not np.any(nz):
        return 0.0
    return float(np.max(kdotc[nz] / amp[nz]))


def mean_mode(f: SpectralVectorField) -> np.ndarray:
    return f.coeffs[(slice(None),) + f.grid.zero_site]


def is_solenoidal(f: SpectralVectorField, tol: float = 1e-12) -> bool:
    return divergence_defect(f) <= tol


def leray_project(f: SpectralVectorField) -> SpectralVectorField:
    """Per-mode ``u_hat - k (k.u_hat)/|k|^2``; the ``k = 0`` site is untouched.

    Nyquist planes are zeroed: their wavevector sign is ambiguous, so no
    real divergence-free field lives there.
    """
    return SpectralVectorField(f.grid, _project(f.grid, f.coeffs) * f.grid.nyquist_free, solenoidal=True)


def dealias(f: SpectralVectorField) -> SpectralVectorField:
    return f.with_coeffs(f.coeffs * f.grid.dealias_mask)


def gradient_field(grid: WaveGrid, phi_hat: np.ndarray) -> SpectralVectorField:
    """``grad phi`` for scalar coefficients ``phi_hat`` of shape ``(n, n, n, n)``."""
    return SpectralVectorField(grid, 1j * grid.wavevectors * phi_hat)


def l2_inner(u: SpectralVectorField, v: SpectralVectorField) -> float:
    check_same_grid(u, v)
    return float(_l2_inner(u.grid, u.coeffs, v.coeffs))


def h1dot_inner(u: SpectralVectorField, v: SpectralVectorField) -> float:
    """``(grad u, grad v)_{L^2}`` over the box."""
    check_same_grid(u, v)
    return float(_h1_inner(u.grid, u.coeffs, v.coeffs))


def h1dot_norm(u: SpectralVectorField) -> float:
    return float(np.sqrt(h1dot_inner(u, u)))


def l2_norm(u: SpectralVectorField) -> float:
    return float(np.sqrt(l2_inner(u, u)))


def hminus1_norm(g: SpectralVectorField) -> float:
    if np.any(np.abs(mean_mode(g)) > 0):
        raise ValueError("H^-1 norm needs a zero-mean field (u_hat(0) != 0)")
    c = g.coeffs
    return float(np.sqrt(g.grid.volume * np.sum(np.abs(c) ** 2 * g.grid.inv_k2)))


def nonlinear_term(u: SpectralVectorField) -> SpectralVectorField:
    """Dealiased pseudo-spectral ``div(u (x) u)``, equal to ``(u.grad) u`` for
    solenoidal ``u``. Not projected."""
    if not is_solenoidal(u, 1e-10):
        raise NotSolenoidalError("nonlinear_term requires a divergence-free field")
    return SpectralVectorField(u.grid, _nonlinear(u.grid, u.coeffs))


def quadrature_grid(grid: WaveGrid, degree: int) -> WaveGrid:
    """Smallest even lattice on which the rectangle rule integrates a product of
    ``degree`` dealiased fields exactly (aliases never reach the mean mode).

    The same lattice also recovers the retained coefficients of a product of
    ``degree - 1`` fields without aliasing.
    """
    m = degree * grid.kmax + 1
    m += m % 2
    return grid if m <= grid.n_per_dim else WaveGrid(m, grid.box_length)


def _pad_coeffs(grid: WaveGrid, fine: WaveGrid, c: np.ndarray) -> np.ndarray:
    """Embed dealiased coefficients of ``grid`` into the (finer) lattice ``fine``."""
    if fine == grid:
        return c
    out = np.zeros(c.shape[:-4] + fine.shape, dtype=complex)
    out[(...,) + _retained_index(fine, grid.kmax)] = c[(...,) + _retained_index(grid, grid.kmax)]
    return out


def _unpad_coeffs(grid: WaveGrid, fine: WaveGrid, cfine: np.ndarray) -> np.ndarray:
    """Inverse of ``_pad_coeffs``: keep only the modes retained on ``grid``."""
    if fine == grid:
        return cfine * grid.dealias_mask
    out = np.zeros(cfine.shape[:-4] + grid.shape, dtype=complex)
    out[(...,) + _retained_index(grid, grid.kmax)] = cfine[(...,) + _retained_index(fine, grid.kmax)]
    return out


def _retained_index(grid: WaveGrid, kmax: int):
    src = np.r_[0:kmax + 1, -kmax:0] % grid.n_per_dim
    return np.ix_(src, src, src, src)


def to_physical_on(f: SpectralVectorField, fine: WaveGrid) -> np.ndarray:
    return _to_physical(fine, _pad_coeffs(f.grid, fine, f.coeffs))


def velocity_gradient(u: SpectralVectorField, fine: WaveGrid | None = None) -> np.ndarray:
    """Physical ``A[i, j] = du_i/dx_j``, shape ``(4, 4, m, m, m, m)``."""
    fine = fine or u.grid
    return _to_physical(fine, _gradient(fine, _pad_coeffs(u.grid, fine, u.coeffs)))


def quadrature(grid: WaveGrid, values: np.ndarray) -> np.ndarray:
    """Rectangle-rule integral over the box (spectrally exact for resolved
    trigonometric polynomials)."""
    return values.mean(axis=AXES) * grid.volume


def l4_norm(f: SpectralVectorField) -> float:
    fine = quadrature_grid(f.grid, 4)
    u = to_physical_on(f, fine)
    return float(quadrature(fine, np.sum(u**2, axis=0) ** 2) ** 0.25)


def random_solenoidal(grid: WaveGrid, rng: np.random.Generator, *, kmax: float | None = None,
                      slope: float = 0.0, h1_norm: float | None = None) -> SpectralVectorField:
    """Seeded random real, zero-mean, dealiased, divergence-free field.

    Coefficients are white noise shaped by ``|k|^-slope`` and restricted to
    ``|m| <= kmax`` (integer-index radius) when given.
    """
    noise = rng.standard_normal((DIM,) + grid.shape)
    c = _from_physical(grid, noise)
    keep = grid.dealias_mask.copy()
    if kmax is not None:
        keep &= np.sum(grid.modes.astype(float) ** 2, axis=0) <= kmax**2
    keep[grid.zero_site] = False
    weight = np.where(keep, np.power(np.where(grid.k2 > 0, grid.k2, 1.0), -slope / 2), 0.0)
    c = _project(grid, c * weight)
    f = SpectralVectorField(grid, c, solenoidal=True)
    if h1_norm is not None:
        nrm = h1dot_norm(f)
        if nrm == 0:
            raise ValueError("random field has no retained modes")
        f = f * (h1_norm / nrm)
    return f
