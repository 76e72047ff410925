"""Explicit constants and standalone inequalities behind the dimension bound.

* trace-free quadratic forms: ``|(A v, v)| <= c_d |A| |v|^2`` with
  ``c_d = sqrt((d-1)/d)`` and ``|A|`` the Frobenius norm;
* orthonormal-gradient systems: ``|rho|_{L^p} <= (d L_d)^{2/d} d/(d-2) n^{(d-2)/d}``;
* Cwikel-Lieb-Rozenblum constants ``L_{0,d}`` and a finite-difference check
  of the eigenvalue count;
* the attractor-dimension bound ``12 L_{0,4} |g|_{-1}^2 / nu^4``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from itertools import product

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla
from scipy.special import gamma

from . import spectral as sp
from .spectral import SpectralVectorField

LIEB_MULTIPLIER_4D = 6.034
ROUNDED_PREFACTOR = 0.23


@dataclass(frozen=True)
class ConstantTable:
    d: int
    c_d: float
    omega_d: float
    L_cl: float
    L_upper: float | None
    provenance: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def constants(d: int = 4, lieb_multiplier: float | None = None) -> ConstantTable:
    """Constants for dimension ``d >= 3``.

    ``L_upper`` is Lieb's bound ``6.034 L_cl`` in d = 4. Elsewhere pass
    ``lieb_multiplier`` explicitly or get ``None``.
    """
    if not isinstance(d, (int, np.integer)) or d < 3:
        raise ValueError(f"d must be an integer >= 3, got {d!r}")
    omega = unit_ball_volume(d)
    L_cl = omega / (2 * math.pi) ** d
    prov = {
        "c_d": "sqrt((d-1)/d): largest eigenvalue of a trace-free symmetric matrix per unit Frobenius norm",
        "L_cl": "semiclassical constant omega_d / (2 pi)^d",
    }
    if lieb_multiplier is None and d == 4:
        lieb_multiplier = LIEB_MULTIPLIER_4D
        prov["L_upper"] = ("Lieb's CLR bound 6.034 * L_cl = 6.034/(32 pi^2) ~ 0.0191; the value 0.0032 "
                           "is L_cl itself, not L_{0,4}")
    elif lieb_multiplier is not None:
        prov["L_upper"] = f"user multiplier {lieb_multiplier} * L_cl"
    else:
        prov["L_upper"] = "no tabulated bound for this dimension"
    L_upper = None if lieb_multiplier is None else lieb_multiplier * L_cl
    return ConstantTable(d=int(d), c_d=math.sqrt((d - 1) / d), omega_d=omega, L_cl=L_cl,
                         L_upper=L_upper, provenance=prov)


# ---------------------------------------------------------------------------
# dimension bound


@dataclass(frozen=True)
class BoundReport:
    nu: float
    g_hminus1: float
    L_used: float
    bound_exact: float
    bound_rounded: float
    n_star: float
    provenance: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def dimension_bound(g_hminus1: float, nu: float, L: float | None = None) -> BoundReport:
    """``dim_f <= 12 L |g|_{-1}^2 / nu^4 (<= 0.23 |g|^2/nu^4 for L = L_{0,4})``.

    ``n_star`` is the positive root of ``sqrt(n)(-nu sqrt(n) + 2 sqrt(3 L) |g| / nu)``,
    which coincides with ``bound_exact``.
    """
    if not nu > 0:
        raise ValueError(f"nu must be positive, got {nu}")
    if g_hminus1 < 0:
        raise ValueError("g_hminus1 must be nonnegative")
    if L is None:
        L = constants(4).L_upper
    if not L > 0:
        raise ValueError("L must be positive")
    exact = 12 * L * g_hminus1**2 / nu**4
    n_star = (2 * math.sqrt(3 * L) * g_hminus1 / nu**2) ** 2
    return BoundReport(nu=nu, g_hminus1=g_hminus1, L_used=L, bound_exact=exact,
                       bound_rounded=ROUNDED_PREFACTOR * g_hminus1**2 / nu**4, n_star=n_star,
                       provenance={"prefactor": "12 L", "rounded": "0.23 >= 12 * 6.034/(32 pi^2)"})


# ---------------------------------------------------------------------------
# trace-free quadratic forms


def matrix_bound_check(A, v, tol: float = 1e-12) -> float:
    """``(A v, v) / (|A|_F |v|^2)`` for trace-free ``A``; never exceeds ``c_d``.

    Only the symmetric part of ``A`` enters the quadratic form, and a
    trace-free symmetric matrix has ``lambda_max^2 <= (d-1)/d * sum lambda^2``.
    With the spectral norm instead of the Frobenius norm the ratio reaches 1
    (e.g. ``diag(1, -1, 0, 0)``, ``v = e_1``).
    """
    A = np.asarray(A, dtype=float)
    v = np.asarray(v, dtype=float)
    nrm = np.linalg.norm(A)
    if abs(np.trace(A)) > tol * max(1.0, nrm):
        raise ValueError(f"matrix is not trace-free (trace {np.trace(A):.3g})")
    vv = float(v @ v)
    if nrm == 0 or vv == 0:
        return 0.0
    return float(v @ A @ v) / (nrm * vv)


def rho(frame, fine=None) -> np.ndarray:
    """``rho(x) = sum_i |v_i(x)|^2`` on the physical grid (``fine`` if given).

    ``frame`` may be a ``TangentFrame`` or a sequence of fields.
    """
    fields = frame.fields if hasattr(frame, "fields") else list(frame)
    if not fields:
        g = fine
        if g is None:
            raise ValueError("empty frame needs an explicit grid")
        return np.zeros(g.shape)
    grid = fields[0].grid
    fine = fine or grid
    out = np.zeros(fine.shape)
    for f in fields:
        v = sp.to_physical_on(f, fine)
        out += np.sum(v**2, axis=0)
    return out


def rho_bound(n: int, d: int = 4, L: float | None = None) -> float:
    """``(d L)^{2/d} d/(d-2) n^{(d-2)/d}`` (for d = 4: ``2 (4 L)^{1/2} sqrt(n)``)."""
    if L is None:
        L = constants(d).L_upper
    return (d * L) ** (2 / d) * d / (d - 2) * n ** ((d - 2) / d)


@dataclass(frozen=True)
class RhoBoundReport:
    n: int
    rho_l2: float
    bound: float
    ratio: float
    margin: float


def rho_bound_check(frame, gram_tol: float = 1e-8, L: float | None = None) -> RhoBoundReport:
    """Compare ``|rho|_{L^2}`` with its d = 4 bound for an ``H^1``-orthonormal frame."""
    from .tangent import gram_defect

    dev = gram_defect(frame)
    if dev > gram_tol:
        raise ValueError(f"frame is not H^1-orthonormal (Gram deviation {dev:.3g})")
    fine = sp.quadrature_grid(frame.grid, 4)
    r = rho(frame, fine)
    l2 = float(np.sqrt(sp.quadrature(fine, r**2)))
    b = rho_bound(frame.n, 4, L)
    return RhoBoundReport(n=frame.n, rho_l2=l2, bound=b, ratio=l2 / b, margin=b - l2)


@dataclass(frozen=True)
class TraceChain:
    """Successive members of the trace estimate for one ``(u, frame)``.

    ``stretch = |sum_i ((v_i.grad) u, v_i)|`` is bounded by ``weighted =
    c_4 int rho |grad u|``, then by ``cauchy = c_4 |grad u| |rho|_2``, then by
    ``final = c_4 |grad u| 2 (4 L)^{1/2} sqrt(n)``.
    """

    stretch: float
    weighted: float
    cauchy: float
    final: float
    pointwise_ok: bool

    @property
    def holds(self):
        return (self.pointwise_ok and self.stretch <= self.weighted * (1 + 1e-12) + 1e-300
                and self.weighted <= self.cauchy * (1 + 1e-12) and self.cauchy <= self.final)


def trace_chain(u: SpectralVectorField, frame, L: float | None = None) -> TraceChain:
    c4 = constants(4).c_d
    fine = sp.quadrature_grid(u.grid, 4)
    A = sp.velocity_gradient(u, fine)
    Afro = np.sqrt(np.sum(A**2, axis=(0, 1)))
    r = np.zeros(fine.shape)
    q = np.zeros(fine.shape)
    for f in frame.fields:
        v = sp.to_physical_on(f, fine)
        r += np.sum(v**2, axis=0)
        q += np.einsum("i...,ij...,j...->...", v, A, v)
    pointwise_ok = bool(np.all(np.abs(q) <= c4 * Afro * r * (1 + 1e-12) + 1e-300))
    grad_l2 = float(np.sqrt(sp.quadrature(fine, Afro**2)))
    rho_l2 = float(np.sqrt(sp.quadrature(fine, r**2)))
    return TraceChain(
        stretch=abs(float(sp.quadrature(fine, q))),
        weighted=c4 * float(sp.quadrature(fine, r * Afro)),
        cauchy=c4 * grad_l2 * rho_l2,
        final=c4 * grad_l2 * rho_bound(frame.n, 4, L),
        pointwise_ok=pointwise_ok,
    )


# ---------------------------------------------------------------------------
# CLR eigenvalue count


@dataclass(frozen=True)
class PotentialSpec:
    """Square well ``V = depth`` on ``|x_j| < radius`` inside the box ``[-box/2, box/2]^4``.

    ``kind="box"`` is the cube well in all four coordinates (sparse 4D
    operator); ``kind="separable"`` is ``V = sum_j W(x_j)`` with ``W`` the
    1D well, whose spectrum is a Kronecker sum of 1D spectra.
    """

    kind: str = "box"
    depth: float = 0.0
    radius: float = 1.0
    box: float = 6.0
    resolution: int = 12


@dataclass(frozen=True)
class CLRResult:
    spec: PotentialSpec
    count: int
    integral_v2: float
    bound: float
    ratio: float
    lowest: float

    def to_dict(self):
        d = asdict(self)
        d["spec"] = asdict(self.spec)
        return d


NEGATIVE_TOL = 1e-8
MAX_KH = 2.0
MIN_WELL_POINTS = 3


def _grid_1d(spec: PotentialSpec):
    m = spec.resolution
    h = spec.box / (m + 1)
    x = -spec.box / 2 + h * np.arange(1, m + 1)
    return x, h


def _check_resolution(spec: PotentialSpec):
    if spec.box <= 2 * spec.radius:
        raise ValueError("box must contain the well")
    x, h = _grid_1d(spec)
    inside = int(np.count_nonzero(np.abs(x) < spec.radius))
    if spec.depth > 0 and inside < MIN_WELL_POINTS:
        raise ValueError(f"discretization too coarse: {inside} points across the well")
    if h * math.sqrt(max(spec.depth, 0.0)) > MAX_KH:
        raise ValueError(f"discretization too coarse: h*sqrt(depth) = {h * math.sqrt(spec.depth):.3g} > {MAX_KH}")


def _laplacian_1d(m, h):
    return sps.diags([-np.ones(m - 1), 2 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1]) / h**2


def _parity_bases(m: int):
    """Orthonormal bases ``(Q_even, Q_odd)`` of the mirror-symmetric and
    mirror-antisymmetric vectors on ``m`` points."""
    even, odd = [], []
    for i in range((m + 1) // 2):
        j = m - 1 - i
        e = np.zeros(m)
        if i == j:
            e[i] = 1.0
            even.append(e)
            continue
        e[i] = e[j] = 1 / math.sqrt(2)
        o = np.zeros(m)
        o[i], o[j] = 1 / math.sqrt(2), -1 / math.sqrt(2)
        even.append(e)
        odd.append(o)
    return np.array(even).T, np.array(odd).T


def _negative_inertia(H, tol=NEGATIVE_TOL) -> int:
    """Number of eigenvalues of the symmetric sparse ``H`` below ``-tol``.

    Sylvester's law of inertia: a symmetric-mode LU of ``H + tol I`` with
    diagonal pivots only is a congruence ``P^T L D L^T P``, so the count of
    negative pivots equals the count of negative eigenvalues. Unlike a
    Krylov eigensolver this cannot miss copies of degenerate eigenvalues.
    """
    A = (H + tol * sps.identity(H.shape[0])).tocsc()
    lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options={"SymmetricMode": True})
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise ArithmeticError("LU left symmetric mode; inertia count is not valid")
    return int(np.count_nonzero(lu.U.diagonal() < 0))


def _count_cube_well(x, h, depth, radius):
    """Negative-eigenvalue count and lowest eigenvalue of the Dirichlet
    ``-Delta - depth * 1_{cube}``.

    Operator and well are invariant under each reflection ``x_j -> -x_j``,
    so the problem splits into 16 parity sectors; sectors with the same
    number of odd axes are permutations of each other and share spectra.
    """
    m = len(x)
    D = _laplacian_1d(m, h).toarray()
    ind = (np.abs(x) < radius).astype(float)
    parts = []
    for Q in _parity_bases(m):
        parts.append((sps.csr_matrix(Q.T @ D @ Q), np.einsum("ia,i,ia->a", Q, ind, Q)))
    total, lowest = 0, math.inf
    for n_odd in range(5):
        sec = [parts[1]] * n_odd + [parts[0]] * (4 - n_odd)
        if any(p[0].shape[0] == 0 for p in sec):
            continue
        eyes = [sps.identity(p[0].shape[0], format="csr") for p in sec]
        lap = sum(_kron4([sec[j][0] if j == i else eyes[j] for j in range(4)]) for i in range(4))
        V = depth * np.einsum("a,b,c,d->abcd", *[p[1] for p in sec])
        H = (lap - sps.diags(V.reshape(-1))).tocsr()
        total += math.comb(4, n_odd) * _negative_inertia(H)
        if n_odd == 0:
            lowest = float(spla.eigsh(H, k=1, which="SA", tol=1e-12, return_eigenvectors=False)[0])
    return total, lowest


def clr_count(spec: PotentialSpec) -> CLRResult:
    """Count negative eigenvalues of the Dirichlet finite-difference ``-Delta - V``
    and compare with ``L_upper int V^2``."""
    _check_resolution(spec)
    L_upper = constants(4).L_upper
    x, h = _grid_1d(spec)
    m = len(x)
    w1 = np.where(np.abs(x) < spec.radius, spec.depth, 0.0)
    D = _laplacian_1d(m, h)
    if spec.depth == 0:
        lam = np.linalg.eigvalsh(D.toarray())
        return CLRResult(spec, 0, 0.0, 0.0, 0.0, float(4 * lam[0]))
    if spec.kind == "separable":
        lam = np.linalg.eigvalsh((D - sps.diags(w1)).toarray())
        count = _count_kronecker_sum(lam, 4)
        lowest = 4 * lam[0]
        V = w1[:, None, None, None] + w1[None, :, None, None] + w1[None, None, :, None] + w1[None, None, None, :]
        iv2 = float(np.sum(V**2) * h**4)
    elif spec.kind == "box":
        count, lowest = _count_cube_well(x, h, spec.depth, spec.radius)
        inside = int(np.count_nonzero(np.abs(x) < spec.radius))
        iv2 = float(spec.depth**2 * (inside * h) ** 4)
    else:
        raise ValueError(f"unknown potential kind {spec.kind!r}")
    bound = L_upper * iv2
    return CLRResult(spec, count, iv2, bound, count / bound if bound > 0 else 0.0, float(lowest))


def _kron4(mats):
    out = mats[0]
    for M in mats[1:]:
        out = sps.kron(out, M, format="csr")
    return out


def _count_kronecker_sum(lam, d):
    """``#{(i_1..i_d) : lam[i_1] + ... + lam[i_d] < -tol}`` for sorted ``lam``."""
    lam = np.sort(lam)
    neg_part = lam[lam < 0]
    if len(neg_part) == 0:
        return 0
    # only tuples whose partial sums stay below -tol - (d-1-j)*lam[0]
    # can close; enumerate the first d-1 indices, binary-search the last
    cnt = 0
    lo = lam[0]
    for head in product(range(len(lam)), repeat=d - 1):
        s = sum(lam[i] for i in head)
        if s + (d - 1 - len(head)) * lo >= -NEGATIVE_TOL - lo:
            continue
        cnt += int(np.searchsorted(lam, -NEGATIVE_TOL - s, side="left"))
    return cnt


def clr_cross_check(d: int = 4, depths=(0.0, 5.0, 10.0, 20.0), kind: str = "box",
                    radius: float = 1.0, box: float = 6.0, resolution: int = 12) -> dict:
    """Run ``clr_count`` over a family of well depths and report the worst ratio."""
    if d != 4:
        raise ValueError("the eigenvalue-count check is implemented for d = 4")
    results = [clr_count(PotentialSpec(kind, dp, radius, box, resolution)) for dp in depths]
    worst = max((r.ratio for r in results), default=0.0)
    return {"d": d, "results": [r.to_dict() for r in results], "worst_ratio": worst,
            "all_within_bound": all(r.count <= r.bound or r.integral_v2 == 0 and r.count == 0
                                    for r in results)}
