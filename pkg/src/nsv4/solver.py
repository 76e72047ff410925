"""Time integration of the Voigt-inverted system on the 4-torus.

With ``(-Delta)^{-1}`` applied the evolution is the bounded ODE

    du/dt = -nu u + (-Delta)^{-1} P [g - (u.grad) u]

on dealiased solenoidal fields, advanced with classical RK4.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import spectral as sp
from .spectral import SpectralVectorField, WaveGrid

log = logging.getLogger(__name__)

SOLENOIDAL_TOL = 1e-10


class BlowUpError(FloatingPointError):
    """Raised when the state stops being finite."""


@dataclass(frozen=True)
class ForcingSpec:
    """Recipe for the body force ``g``.

    ``kind`` is one of ``"zero"``, ``"modes"``, ``"file"``, ``"random"`` or
    ``"shear"``. Whatever the recipe, ``build`` returns a dealiased,
    mean-free, Leray-projected field; ``g_norm`` (if set) rescales it to that
    ``H^-1`` norm.
    """

    kind: str = "random"
    modes: tuple = ()
    path: str | None = None
    g_norm: float | None = 1.0
    seed: int = 0
    kmax: float = 2.0
    amplitude: float = 1.0

    @classmethod
    def zero(cls):
        return cls(kind="zero", g_norm=None)

    @classmethod
    def from_modes(cls, modes, g_norm=None):
        modes = tuple((tuple(int(v) for v in m), tuple(complex(a) for a in amp)) for m, amp in modes)
        return cls(kind="modes", modes=modes, g_norm=g_norm)

    @classmethod
    def from_file(cls, path, g_norm=None):
        return cls(kind="file", path=str(path), g_norm=g_norm)

    @classmethod
    def random_low_mode(cls, g_norm=1.0, seed=0, kmax=2.0):
        return cls(kind="random", g_norm=g_norm, seed=seed, kmax=kmax)

    @classmethod
    def shear(cls, nu, amplitude=1.0):
        """``g = nu A sin(x_2) e_1``, which balances the shear ``A sin(x_2) e_1``."""
        return cls(kind="shear", g_norm=None, amplitude=nu * amplitude)

    def build(self, grid: WaveGrid) -> SpectralVectorField:
        if self.kind == "zero":
            return SpectralVectorField.zeros(grid)
        if self.kind == "modes":
            g = SpectralVectorField.from_modes(grid, [(m, np.array(a)) for m, a in self.modes])
        elif self.kind == "file":
            from .io import read_field
            g = read_field(self.path)
            sp.check_same_grid(g, SpectralVectorField.zeros(grid))
        elif self.kind == "random":
            g = sp.random_solenoidal(grid, np.random.default_rng(self.seed), kmax=self.kmax)
        elif self.kind == "shear":
            g = shear_field(grid, self.amplitude)
        else:
            raise ValueError(f"unknown forcing kind {self.kind!r}")
        c = g.coeffs * grid.dealias_mask
        c[(slice(None),) + grid.zero_site] = 0
        g = sp.leray_project(g.with_coeffs(c))
        if self.g_norm is not None:
            nrm = sp.hminus1_norm(g)
            if nrm == 0:
                if self.g_norm != 0:
                    raise ValueError("cannot rescale a zero forcing to a nonzero norm")
            else:
                g = g * (self.g_norm / nrm)
        return g

    def to_dict(self):
        d = {"kind": self.kind, "g_norm": self.g_norm}
        if self.kind == "modes":
            d["modes"] = [[list(m), [[a.real, a.imag] for a in amp]] for m, amp in self.modes]
        elif self.kind == "file":
            d["path"] = self.path
        elif self.kind == "random":
            d.update(seed=self.seed, kmax=self.kmax)
        elif self.kind == "shear":
            d["amplitude"] = self.amplitude
        return d


def shear_field(grid: WaveGrid, amplitude: float = 1.0) -> SpectralVectorField:
    """``amplitude * sin(k0 x_2) e_1``."""
    a = np.zeros(4, dtype=complex)
    a[0] = -0.5j * amplitude
    f = SpectralVectorField.from_modes(grid, [((0, 1, 0, 0), a)])
    return f.with_coeffs(f.coeffs, solenoidal=True)


@dataclass(frozen=True)
class SolverConfig:
    nu: float = 0.5
    dt: float = 1e-2
    t_final: float = 10.0
    forcing: ForcingSpec = field(default_factory=ForcingSpec)
    save_every: int = 1

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_final >= self.dt:
            raise ValueError(f"t_final={self.t_final} must be >= dt={self.dt}")
        if self.save_every < 1:
            raise ValueError("save_every must be >= 1")
        if self.dt >= 1.0 / (2.0 * self.nu):
            warnings.warn(f"dt={self.dt} exceeds the stability margin 1/(2 nu)={1 / (2 * self.nu)}",
                          RuntimeWarning, stacklevel=3)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    def to_dict(self):
        return {"nu": self.nu, "dt": self.dt, "t_final": self.t_final,
                "save_every": self.save_every, "forcing": self.forcing.to_dict()}


@dataclass
class TrajectoryLog:
    """Sampled diagnostics of one run.

    ``bound_rhs`` is the right-hand side of the dissipative estimate
    ``|grad u(t)|^2 <= |grad u0|^2 e^{-nu t} + (1 - e^{-nu t}) |g|_{-1}^2 / nu^2``
    measured from ``t_origin``.
    """

    nu: float
    g_hminus1: float
    times: np.ndarray
    steps: np.ndarray
    enstrophy: np.ndarray
    g_dot_u: np.ndarray
    bound_rhs: np.ndarray
    residual: np.ndarray | None = None
    final: SpectralVectorField | None = None
    checkpoints: list = field(default_factory=list)

    def __len__(self):
        return len(self.times)

    def columns(self):
        res = self.residual if self.residual is not None else np.full(len(self), np.nan)
        return {"t": self.times, "enstrophy": self.enstrophy, "g_dot_u": self.g_dot_u,
                "residual": res, "bound_rhs": self.bound_rhs}


# ---------------------------------------------------------------------------


def _rhs(grid: WaveGrid, c: np.ndarray, gc: np.ndarray, nu: float) -> np.ndarray:
    return -nu * c + grid.inv_k2 * sp._project(grid, gc - sp._nonlinear(grid, c))


def _rk4(f, c, dt):
    k1 = f(c)
    k2 = f(c + 0.5 * dt * k1)
    k3 = f(c + 0.5 * dt * k2)
    k4 = f(c + dt * k3)
    return c + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _check_phase_space(*fields):
    sp.check_same_grid(*fields)
    for f in fields:
        if sp.divergence_defect(f) > SOLENOIDAL_TOL:
            raise sp.NotSolenoidalError("inputs must be divergence-free")


def _check_finite(c, t):
    if not np.all(np.isfinite(c)):
        raise BlowUpError(f"non-finite state at t={t:.6g}; the system is dissipative so "
                          "this indicates a numerical fault (dt too large?)")


def rhs(u: SpectralVectorField, g: SpectralVectorField, nu: float) -> SpectralVectorField:
    """``-nu u + (-Delta)^{-1} P (g - (u.grad) u)``, exact on the lattice."""
    _check_phase_space(u, g)
    return SpectralVectorField(u.grid, _rhs(u.grid, u.coeffs, g.coeffs, nu), solenoidal=True)


def step(u: SpectralVectorField, g: SpectralVectorField, nu: float, dt: float) -> SpectralVectorField:
    """One classical RK4 step."""
    _check_phase_space(u, g)
    grid, gc = u.grid, g.coeffs
    c = _rk4(lambda x: _rhs(grid, x, gc, nu), u.coeffs, dt)
    _check_finite(c, dt)
    return SpectralVectorField(grid, c, solenoidal=True)


def enstrophy(u: SpectralVectorField) -> float:
    """``|grad u|^2_{L^2}``."""
    return sp.h1dot_inner(u, u)


def dissipative_bound(t, e0, g_hminus1, nu):
    decay = np.exp(-nu * np.asarray(t))
    return e0 * decay + (1.0 - decay) * g_hminus1**2 / nu**2


def absorbing_time(e0: float, g_hminus1: float, nu: float, eps: float = 1e-3) -> float:
    """First time at which ``e^{-nu t} e0 < eps |g|^2/nu^2``."""
    if g_hminus1 == 0 or e0 == 0:
        return 0.0
    return max(0.0, math.log(e0 * nu**2 / (eps * g_hminus1**2)) / nu)


def simulate(u0: SpectralVectorField, config: SolverConfig, *, g: SpectralVectorField | None = None,
             start_step: int = 0, checkpoint_every: int = 0, bound_origin=None,
             callback=None) -> TrajectoryLog:
    """Advance ``u0`` from step ``start_step`` to ``t_final``.

    Samples are taken every ``config.save_every`` steps (step 0 included).
    Restarting from a checkpoint taken at step ``k`` with ``start_step=k``
    reproduces the remaining samples bit for bit, since time is ``step * dt``
    and the arithmetic is identical.
    """
    if g is None:
        g = config.forcing.build(u0.grid)
    _check_phase_space(u0, g)
    grid, nu, dt = u0.grid, config.nu, config.dt
    gc = g.coeffs
    g_norm = sp.hminus1_norm(g)
    n_total = config.n_steps
    if start_step > n_total:
        raise ValueError(f"start_step {start_step} beyond final step {n_total}")
    f = lambda x: _rhs(grid, x, gc, nu)  # noqa: E731

    steps, ens, gu, ckpts = [], [], [], []
    c = u0.coeffs.copy()

    def sample(s, c):
        v = SpectralVectorField(grid, c, solenoidal=True)
        steps.append(s)
        ens.append(sp.h1dot_inner(v, v))
        gu.append(sp.l2_inner(g, v))
        if callback is not None:
            callback(s * dt, v)

    sample(start_step, c)
    for s in range(start_step + 1, n_total + 1):
        c = _rk4(f, c, dt)
        _check_finite(c, s * dt)
        if (s - start_step) % config.save_every == 0 or s == n_total:
            sample(s, c)
        if checkpoint_every and s % checkpoint_every == 0:
            ckpts.append((s, SpectralVectorField(grid, c.copy(), solenoidal=True)))

    steps = np.array(steps)
    times = steps * dt
    ens = np.array(ens)
    t0, e0 = bound_origin if bound_origin is not None else (times[0], ens[0])
    log_ = TrajectoryLog(nu=nu, g_hminus1=g_norm, times=times, steps=steps, enstrophy=ens,
                         g_dot_u=np.array(gu), bound_rhs=dissipative_bound(times - t0, e0, g_norm, nu),
                         final=SpectralVectorField(grid, c, solenoidal=True), checkpoints=ckpts)
    if len(log_) >= 3 and np.allclose(np.diff(times), times[1] - times[0], rtol=1e-9, atol=0):
        log_.residual = energy_residual(log_, nu)
    return log_


# ---------------------------------------------------------------------------
# derivative stencils on uniform samples (coefficients for h * f'(x_i))

_CENTRAL = {2: ([-1, 1], [-0.5, 0.5]), 4: ([-2, -1, 1, 2], [1 / 12, -8 / 12, 8 / 12, -1 / 12])}
_FORWARD = {
    2: [[-1.5, 2.0, -0.5]],
    4: [[-25 / 12, 4.0, -3.0, 4 / 3, -0.25],
        [-0.25, -5 / 6, 1.5, -0.5, 1 / 12]],
}


def time_derivative(y: np.ndarray, h: float, order: int = 4) -> np.ndarray:
    """Finite-difference ``dy/dt`` on uniform samples: centred stencils inside,
    one-sided stencils of the same order at the ends."""
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n < 3:
        raise ValueError("need at least 3 samples")
    if order == 4 and n < 5:
        order = 2
    offs, w = _CENTRAL[order]
    r = order // 2
    d = np.zeros(n)
    for o, c in zip(offs, w):
        d[r:n - r] += c * y[r + o:n - r + o]
    for i, row in enumerate(_FORWARD[order]):
        d[i] = np.dot(row, y[:len(row)])
        d[n - 1 - i] = -np.dot(row, y[::-1][:len(row)])
    return d / h


def energy_residual(log: TrajectoryLog, nu: float, order: int = 4) -> np.ndarray:
    """``d/dt (|grad u|^2 / 2) + nu |grad u|^2 - (g, u)`` along the samples."""
    if len(log) < 3:
        raise ValueError("energy residual needs at least 3 samples")
    h = np.diff(log.times)
    if not np.allclose(h, h[0], rtol=1e-9, atol=0):
        raise ValueError("energy residual needs uniformly spaced samples")
    dE = time_derivative(0.5 * log.enstrophy, h[0], order)
    return dE + nu * log.enstrophy - log.g_dot_u


# ---------------------------------------------------------------------------
# embedding constant and two-trajectory contraction


def _cubic_gradient(f: SpectralVectorField) -> np.ndarray:
    """Retained coefficients of ``|v|^2 v`` (alias-free)."""
    fine = sp.quadrature_grid(f.grid, 4)
    v = sp.to_physical_on(f, fine)
    cf = sp._from_physical(fine, np.sum(v**2, axis=0) * v)
    return sp._unpad_coeffs(f.grid, fine, cf)


def embedding_constant(grid: WaveGrid, n_probe: int = 6, seed: int = 0, iters: int = 40) -> float:
    """Empirical ``sup |v|_{L^4} / |grad v|_{L^2}`` over dealiased solenoidal fields.

    Probes (lowest single modes plus seeded random fields) are each pushed
    uphill by the normalized iteration ``v <- (-Delta)^{-1} P(|v|^2 v)``,
    which does not decrease ``|v|_4`` on the ``H^1`` sphere.
    """
    rng = np.random.default_rng(seed)
    probes = []
    for m in [(1, 0, 0, 0), (1, 1, 0, 0), (1, 1, 1, 0), (1, 1, 1, 1)]:
        a = np.zeros(4, dtype=complex)
        a[3 if m[3] == 0 else 0] = 1.0
        probes.append(sp.leray_project(SpectralVectorField.from_modes(grid, [(m, a)])))
    for i in range(n_probe):
        probes.append(sp.random_solenoidal(grid, rng, slope=1.0 + i))
    best = 0.0
    for v in probes:
        v = v / sp.h1dot_norm(v)
        ratio = sp.l4_norm(v)
        for _ in range(iters):
            c = grid.inv_k2 * sp._project(grid, _cubic_gradient(v))
            w = SpectralVectorField(grid, c, solenoidal=True)
            w = w / sp.h1dot_norm(w)
            r = sp.l4_norm(w)
            if r <= ratio * (1 + 1e-12):
                ratio = max(ratio, r)
                break
            v, ratio = w, r
        best = max(best, ratio)
    return best


@dataclass
class ContractionLog:
    times: np.ndarray
    diff_h1: np.ndarray
    u2_h1: np.ndarray
    c_emb: float
    gronwall: np.ndarray
    ratio: np.ndarray


def contraction_check(u1_0: SpectralVectorField, u2_0: SpectralVectorField, config: SolverConfig,
                      *, c_emb: float | None = None, g: SpectralVectorField | None = None) -> ContractionLog:
    """Co-evolve two solutions and compare their separation with the
    Gronwall envelope ``|grad v(0)| exp(int_0^t (C^2 |grad u2| - nu) ds)``."""
    _check_phase_space(u1_0, u2_0)
    grid = u1_0.grid
    if g is None:
        g = config.forcing.build(grid)
    if c_emb is None:
        c_emb = embedding_constant(grid)
    nu, dt, gc = config.nu, config.dt, g.coeffs
    f = lambda x: _rhs(grid, x, gc, nu)  # noqa: E731
    # both trajectories advance in one batched array; rows never interact
    c = np.stack([u1_0.coeffs, u2_0.coeffs])
    times, dn, un = [], [], []

    def sample(s, c):
        times.append(s * dt)
        d = c[0] - c[1]
        dn.append(float(np.sqrt(sp._h1_inner(grid, d, d))))
        un.append(float(np.sqrt(sp._h1_inner(grid, c[1], c[1]))))

    sample(0, c)
    for s in range(1, config.n_steps + 1):
        c = _rk4(f, c, dt)
        _check_finite(c, s * dt)
        if s % config.save_every == 0 or s == config.n_steps:
            sample(s, c)
    times, dn, un = map(np.array, (times, dn, un))
    rate = c_emb**2 * un - nu
    expo = np.concatenate([[0.0], np.cumsum(0.5 * (rate[1:] + rate[:-1]) * np.diff(times))])
    env = dn[0] * np.exp(expo)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(env > 0, dn / env, 0.0)
    return ContractionLog(times=times, diff_h1=dn, u2_h1=un, c_emb=c_emb, gronwall=env, ratio=ratio)
