"""Equation of variations, H^1-orthonormal tangent frames and n-traces.

Along a trajectory ``u(t)`` a perturbation obeys ``dv/dt = L_u v`` with

    L_u v = (-Delta)^{-1} P ( -(u.grad) v - (v.grad) u + nu Delta v ).

For an ``H^1``-orthonormal frame the n-trace is ``sum_i (grad L_u v_i, grad v_i)``;
its long-time average ``q(n)`` decides volume contraction: ``q(n) < 0``
bounds the attractor dimension by ``n``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import spectral as sp
from .solver import SolverConfig, _check_finite, _rhs, _rk4, absorbing_time
from .spectral import SpectralVectorField, WaveGrid

log = logging.getLogger(__name__)

ORACLE_MAX_N = 8


class RankDeficiencyError(ArithmeticError):
    """A frame vector became (numerically) dependent on the previous ones."""

    def __init__(self, index, msg=None):
        self.index = index
        super().__init__(msg or f"frame vector {index} is linearly dependent on vectors 0..{index - 1}; "
                                "the tangent space collapsed, reduce n")


class TraceIdentityError(ArithmeticError):
    pass


class CrossingNotFound(LookupError):
    pass


@dataclass(frozen=True, eq=False)
class TangentFrame:
    """``n`` solenoidal perturbation fields, coefficients shape ``(n, 4, N, N, N, N)``."""

    grid: WaveGrid
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.ndim != 6 or self.coeffs.shape[1:] != (4,) + self.grid.shape:
            raise ValueError(f"frame coefficients have shape {self.coeffs.shape}")

    @property
    def n(self) -> int:
        return self.coeffs.shape[0]

    @classmethod
    def from_fields(cls, fields):
        fields = list(fields)
        if not fields:
            raise ValueError("a frame needs at least one field")
        sp.check_same_grid(*fields)
        return cls(fields[0].grid, np.stack([f.coeffs for f in fields]))

    @classmethod
    def random(cls, grid, n, rng, *, kmax=None, slope=1.0, orthonormal=True):
        f = cls.from_fields([sp.random_solenoidal(grid, rng, kmax=kmax, slope=slope) for _ in range(n)])
        return orthonormalize(f) if orthonormal else f

    @property
    def fields(self):
        return [SpectralVectorField(self.grid, c, solenoidal=True) for c in self.coeffs]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return TangentFrame(self.grid, self.coeffs[i])
        return SpectralVectorField(self.grid, self.coeffs[i], solenoidal=True)

    def scaled(self, s):
        return TangentFrame(self.grid, self.coeffs * s)


def gram(frame: TangentFrame) -> np.ndarray:
    """``G_ij = (grad v_i, grad v_j)``."""
    c = frame.coeffs
    w = c * frame.grid.k2
    flat_c = c.reshape(frame.n, -1)
    flat_w = w.reshape(frame.n, -1)
    return frame.grid.volume * (flat_w.conj() @ flat_c.T).real


def gram_defect(frame: TangentFrame) -> float:
    return float(np.max(np.abs(gram(frame) - np.eye(frame.n))))


def orthonormalize(frame: TangentFrame, collapse_tol: float = 1e-12) -> TangentFrame:
    """Modified Gram-Schmidt in the ``H^1`` inner product (two passes).

    The span of every leading sub-frame is preserved, so the first ``m``
    output vectors depend only on the first ``m`` inputs.
    """
    grid = frame.grid
    out = frame.coeffs.copy()
    for i in range(frame.n):
        v = out[i]
        nrm0 = math.sqrt(max(sp._h1_inner(grid, v, v), 0.0))
        if nrm0 == 0:
            raise RankDeficiencyError(i, f"frame vector {i} has zero H^1 norm")
        for _ in range(2):
            for j in range(i):
                v = v - sp._h1_inner(grid, v, out[j]) * out[j]
        nrm = math.sqrt(max(sp._h1_inner(grid, v, v), 0.0))
        if nrm <= collapse_tol * nrm0:
            raise RankDeficiencyError(i)
        out[i] = v / nrm
    return TangentFrame(grid, out)


# ---------------------------------------------------------------------------


def _variational(grid: WaveGrid, uc: np.ndarray, vc: np.ndarray, nu: float) -> np.ndarray:
    return -nu * vc - grid.inv_k2 * sp._project(grid, sp._nonlinear_sym(grid, uc, vc))


def variational_rhs(u: SpectralVectorField, v: SpectralVectorField, nu: float) -> SpectralVectorField:
    """``L_u v``; linear in ``v``, with the bilinear terms dealiased."""
    sp.check_same_grid(u, v)
    return SpectralVectorField(u.grid, _variational(u.grid, u.coeffs, v.coeffs, nu), solenoidal=True)


def trace_terms(u: SpectralVectorField, frame: TangentFrame, nu: float) -> np.ndarray:
    """Diagonal entries ``(grad L_u v_i, grad v_i)``; the n-trace is their sum."""
    sp.check_same_grid(u, frame[0])
    lv = _variational(u.grid, u.coeffs, frame.coeffs, nu)
    return sp._h1_inner(u.grid, lv, frame.coeffs)


def stretching_terms(u: SpectralVectorField, frame: TangentFrame) -> np.ndarray:
    """``((v_i.grad) u, v_i)_{L^2}`` by physical-space quadrature.

    The integrand is cubic in dealiased fields, so the rectangle rule on the
    base lattice is exact.
    """
    grid = u.grid
    A = sp.velocity_gradient(u)                       # A[i, j] = d_j u_i
    v = sp._to_physical(grid, frame.coeffs)           # (n, 4, ...)
    Av = np.einsum("ij...,nj...->ni...", A, v)
    return sp.quadrature(grid, np.sum(Av * v, axis=1))


def trace_n(u: SpectralVectorField, frame: TangentFrame, nu: float, *, check: bool = True,
            rtol: float = 1e-10, gram_tol: float = 1e-8) -> float:
    """n-trace of ``L_u`` on an ``H^1``-orthonormal frame.

    Computed from the definition; when ``check`` is set the reduced form
    ``-nu n - sum_i ((v_i.grad) u, v_i)`` (orthonormality plus
    skew-symmetry of the transport term) is evaluated independently and the
    two must agree to ``rtol``.
    """
    dev = gram_defect(frame)
    if dev > gram_tol:
        raise ValueError(f"frame is not H^1-orthonormal (Gram deviation {dev:.3g})")
    t1 = float(np.sum(trace_terms(u, frame, nu)))
    if check:
        t2 = -nu * frame.n - float(np.sum(stretching_terms(u, frame)))
        scale = max(abs(t1), abs(t2), nu * frame.n)
        if abs(t1 - t2) > rtol * scale:
            raise TraceIdentityError(f"trace routes disagree: {t1!r} vs {t2!r}")
    return t1


# ---------------------------------------------------------------------------
# dense Jacobian oracle


@dataclass
class _RealBasis:
    """H^1-orthonormal real basis of the dealiased solenoidal fields.

    Each element lives on one conjugate pair ``+-k``: a cosine or a sine
    profile along one of three unit vectors ``p`` orthogonal to ``k``.
    """

    sites: tuple          # index arrays of representative sites
    perp: np.ndarray      # (n_sites, 3, 4) real
    scale: np.ndarray     # (n_sites,) = sqrt(2 V |k|^2)

    @property
    def size(self):
        return 6 * len(self.scale)

    def coordinates(self, c: np.ndarray) -> np.ndarray:
        """Coordinates of coefficient arrays ``(..., 4, N, N, N, N)``; cos block first."""
        w = c[(...,) + (slice(None),) + self.sites]                     # (..., 4, S)
        wp = np.einsum("...cs,spc->...sp", w, self.perp)                 # (..., S, 3)
        wp = wp * self.scale[:, None]
        return np.concatenate([wp.real.reshape(wp.shape[:-2] + (-1,)),
                               -wp.imag.reshape(wp.shape[:-2] + (-1,))], axis=-1)

    def element(self, grid: WaveGrid, idx: np.ndarray) -> np.ndarray:
        """Coefficient arrays of the basis elements ``idx``."""
        n_s = len(self.scale)
        out = np.zeros((len(idx), 4) + grid.shape, dtype=complex)
        for row, b in enumerate(idx):
            kind, rest = divmod(int(b), 3 * n_s)
            s, p = divmod(rest, 3)
            site = tuple(int(a[s]) for a in self.sites)
            neg = tuple((-v) % grid.n_per_dim for v in site)
            a = self.perp[s, p] / self.scale[s]
            val = a if kind == 0 else -1j * a
            out[(row, slice(None)) + site] = val
            out[(row, slice(None)) + neg] = np.conj(val)
        return out


def _real_basis(grid: WaveGrid) -> _RealBasis:
    m = grid.modes.reshape(4, -1).T
    keep = grid.dealias_mask.reshape(-1)
    reps = []
    for flat in np.flatnonzero(keep):
        mm = m[flat]
        nz = np.flatnonzero(mm)
        if len(nz) and mm[nz[0]] > 0:
            reps.append(flat)
    reps = np.array(reps)
    sites = np.unravel_index(reps, grid.shape)
    perp = np.empty((len(reps), 3, 4))
    for s, flat in enumerate(reps):
        k = grid.k0 * m[flat].astype(float)
        q, _ = np.linalg.qr(np.column_stack([k, np.eye(4)]))
        perp[s] = q[:, 1:4].T
    k2 = grid.k2[sites]
    return _RealBasis(sites=sites, perp=perp, scale=np.sqrt(2 * grid.volume * k2))


def jacobian_matrix(u: SpectralVectorField, nu: float, chunk: int = 64) -> tuple[np.ndarray, _RealBasis]:
    """Dense Jacobian of the full right-hand side at ``u`` in an
    ``H^1``-orthonormal real basis.

    Columns come from central differences ``(F(u + e) - F(u - e)) / 2``,
    which are exact because ``F`` is quadratic.
    """
    grid = u.grid
    if grid.n_per_dim > ORACLE_MAX_N:
        raise ValueError(f"dense Jacobian needs n_per_dim <= {ORACLE_MAX_N}, got {grid.n_per_dim}")
    basis = _real_basis(grid)
    zero_g = np.zeros_like(u.coeffs)
    M = np.empty((basis.size, basis.size))
    for start in range(0, basis.size, chunk):
        idx = np.arange(start, min(start + chunk, basis.size))
        e = basis.element(grid, idx)
        col = 0.5 * (_rhs(grid, u.coeffs + e, zero_g, nu) - _rhs(grid, u.coeffs - e, zero_g, nu))
        M[:, idx] = basis.coordinates(col).T
    return M, basis


def trace_oracle(u: SpectralVectorField, frame: TangentFrame, nu: float) -> float:
    """``sum_i <J w_i, w_i>`` with ``J`` the assembled dense Jacobian and
    ``w_i`` the frame's coordinates in the orthonormal basis."""
    sp.check_same_grid(u, frame[0])
    M, basis = jacobian_matrix(u, nu)
    C = basis.coordinates(frame.coeffs).T          # (size, n)
    return float(np.einsum("ai,ab,bi->", C, M, C))


# ---------------------------------------------------------------------------
# q(n)


@dataclass
class TraceReport:
    """Time-averaged n-trace along one trajectory, with the theoretical bound."""

    n: int
    nu: float
    g_hminus1: float
    T: float
    spin_up: float
    times: np.ndarray
    traces: np.ndarray
    running_avg: np.ndarray
    q_n: float
    bound_q_n: float
    bound_respected: bool
    L: float
    reortho_every: int = 1
    meta: dict = field(default_factory=dict)

    def to_dict(self, samples: bool = False) -> dict:
        d = {"n": self.n, "nu": self.nu, "g_hminus1": self.g_hminus1, "T": self.T,
             "spin_up": self.spin_up, "q_n": self.q_n, "bound_q_n": self.bound_q_n,
             "bound_respected": bool(self.bound_respected), "L": self.L,
             "reortho_every": self.reortho_every}
        if samples:
            d["samples"] = [[float(t), float(x)] for t, x in zip(self.times, self.traces)]
        return d


def q_bound(n: int, nu: float, g_hminus1: float, L: float) -> float:
    """``sqrt(n) (-nu sqrt(n) + 2 sqrt(3) L^{1/2} |g|_{-1} / nu)``."""
    return math.sqrt(n) * (-nu * math.sqrt(n) + 2 * math.sqrt(3) * math.sqrt(L) * g_hminus1 / nu)


def _running_average(t, y):
    if len(t) == 1:
        return np.array(y, dtype=float)
    integ = np.concatenate([[0.0], np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))])
    span = t - t[0]
    with np.errstate(invalid="ignore", divide="ignore"):
        avg = np.where(span > 0, integ / np.where(span > 0, span, 1.0), y[0])
    return avg


def q_sweep(u0: SpectralVectorField, config: SolverConfig, n_max: int, *, reortho_every: int = 1,
            spin_up: float | None = None, seed: int = 0, L: float | None = None,
            g: SpectralVectorField | None = None, frame: TangentFrame | None = None,
            slack: float = 1e-8, callback=None) -> list[TraceReport]:
    """Estimate ``q(1) .. q(n_max)`` from one trajectory and one nested frame.

    Trajectory and frame advance together under RK4 (the frame's stages see
    the trajectory's stage values). After every ``reortho_every`` steps the
    frame is re-orthonormalized; the diagonal trace terms are sampled there.
    Gram-Schmidt is nested, so the first ``n`` vectors give ``Tr_n`` for
    every ``n <= n_max`` at once. Samples before ``spin_up`` (default: the
    absorbing-ball entry time) are dropped before time-averaging.
    """
    from .inequalities import constants

    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if reortho_every < 1:
        raise ValueError("reortho_every must be >= 1")
    grid = u0.grid
    if g is None:
        g = config.forcing.build(grid)
    if L is None:
        L = constants(4).L_upper
    g_norm = sp.hminus1_norm(g)
    nu, dt = config.nu, config.dt
    if spin_up is None:
        spin_up = absorbing_time(sp.h1dot_inner(u0, u0), g_norm, nu)
    if frame is None:
        frame = TangentFrame.random(grid, n_max, np.random.default_rng(seed))
    else:
        frame = orthonormalize(frame)
    if frame.n != n_max:
        raise ValueError(f"frame has {frame.n} fields, expected {n_max}")
    gc = g.coeffs

    def f(state):
        uc, vc = state[0], state[1:]
        return np.concatenate([_rhs(grid, uc, gc, nu)[None], _variational(grid, uc, vc, nu)])

    state = np.concatenate([u0.coeffs[None], frame.coeffs])
    times, diag = [], []

    def sample(s, state):
        lv = _variational(grid, state[0], state[1:], nu)
        diag.append(sp._h1_inner(grid, lv, state[1:]))
        times.append(s * dt)
        if callback is not None:
            callback(s * dt, SpectralVectorField(grid, state[0], solenoidal=True),
                     TangentFrame(grid, state[1:]))

    sample(0, state)
    for s in range(1, config.n_steps + 1):
        state = _rk4(f, state, dt)
        _check_finite(state, s * dt)
        if s % reortho_every == 0:
            fr = orthonormalize(TangentFrame(grid, state[1:]))
            state = np.concatenate([state[:1], sp._project(grid, fr.coeffs)])
            sample(s, state)

    times = np.array(times)
    partial = np.cumsum(np.array(diag), axis=1)          # (samples, n_max)
    sel = times >= spin_up - 1e-12
    if np.count_nonzero(sel) < 2:
        raise ValueError(f"spin-up {spin_up} leaves fewer than 2 samples before t_final")
    t_avg = times[sel]
    T = float(t_avg[-1] - t_avg[0])
    reports = []
    for n in range(1, n_max + 1):
        tr = partial[sel, n - 1]
        avg = _running_average(t_avg, tr)
        bound = q_bound(n, nu, g_norm, L)
        q = float(avg[-1])
        reports.append(TraceReport(
            n=n, nu=nu, g_hminus1=g_norm, T=T, spin_up=float(spin_up), times=t_avg, traces=tr,
            running_avg=avg, q_n=q, bound_q_n=bound,
            bound_respected=bool(q <= bound + slack * max(1.0, abs(bound))), L=L,
            reortho_every=reortho_every))
    qs = [r.q_n for r in reports]
    if any(b >= a for a, b in zip(qs, qs[1:])):
        log.info("q(n) not strictly decreasing in n: %s", qs)
    return reports


def q_estimate(u0: SpectralVectorField, config: SolverConfig, n: int, reortho_every: int = 1,
               **kwargs) -> TraceReport:
    return q_sweep(u0, config, n, reortho_every=reortho_every, **kwargs)[-1]


def dimension_crossing(reports, tol: float = 1e-12) -> int:
    """Smallest ``n`` with ``q(n) < 0`` (strictly, beyond ``tol``)."""
    reports = sorted(reports, key=lambda r: r.n)
    for r in reports:
        if r.q_n < -tol:
            return r.n
    n_max = reports[-1].n if reports else 0
    raise CrossingNotFound(f"crossing beyond n_max={n_max}")
