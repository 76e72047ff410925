"""Fast invariant suite behind ``nsv4 selftest`` (8^4 lattice, seconds)."""

from __future__ import annotations

import math

import numpy as np

from . import inequalities as iq
from . import solver as so
from . import spectral as sp
from . import tangent as tg


def _leray(rng, grid):
    worst = 0.0
    for _ in range(20):
        f = sp.SpectralVectorField.from_physical(grid, rng.standard_normal((4,) + grid.shape))
        f = f.with_coeffs(f.coeffs * grid.dealias_mask)
        p = sp.leray_project(f)
        pp = sp.leray_project(p)
        worst = max(worst, np.max(np.abs(pp.coeffs - p.coeffs)) / np.max(np.abs(f.coeffs)),
                    sp.divergence_defect(p))
        phi = sp._from_physical(grid, rng.standard_normal(grid.shape))
        grad = sp.gradient_field(grid, phi)
        worst = max(worst, np.max(np.abs(sp.leray_project(grad).coeffs)) / np.max(np.abs(grad.coeffs)))
    return worst <= 1e-12, f"worst defect {worst:.2e}"


def _energy_neutral(rng, grid):
    u = sp.random_solenoidal(grid, rng, h1_norm=3.0)
    val = abs(sp.l2_inner(sp.nonlinear_term(u), u))
    scale = sp.l2_norm(u) ** 3
    return val <= 1e-10 * scale, f"|(N(u), u)| = {val:.2e}"


def _step_invariants(rng, grid):
    g = so.ForcingSpec.random_low_mode(1.0, seed=int(rng.integers(1 << 31))).build(grid)
    u = sp.random_solenoidal(grid, rng, h1_norm=2.0)
    for _ in range(5):
        u = so.step(u, g, 0.5, 1e-2)
    d = max(sp.divergence_defect(u), sp.hermitian_defect(u), float(np.max(np.abs(sp.mean_mode(u)))))
    return d <= 1e-12, f"max defect {d:.2e}"


def _trace_routes(rng, grid):
    u = sp.random_solenoidal(grid, rng, h1_norm=20.0, slope=0.5)
    fr = tg.TangentFrame.random(grid, 2, rng)
    t1 = tg.trace_n(u, fr, 0.5)
    t3 = tg.trace_oracle(u, fr, 0.5)
    rel = abs(t1 - t3) / abs(t3)
    return rel <= 1e-8, f"trace {t1:.6f} vs oracle {t3:.6f} (rel {rel:.1e})"


def _constants(rng, grid):
    c = iq.constants(4)
    twelve_l = 12 * c.L_upper
    ok = 0.2290 <= twelve_l <= 0.2295 and twelve_l <= 0.23 and math.isclose(c.c_d, math.sqrt(3) / 2)
    return ok, f"12 L_0,4 = {twelve_l:.5f}"


def _rho(rng, grid):
    worst = max(iq.rho_bound_check(tg.TangentFrame.random(grid, n, rng)).ratio for n in (1, 3, 5))
    return worst <= 1.0, f"worst ratio {worst:.3e}"


def _clr(rng, grid):
    r = iq.clr_count(iq.PotentialSpec("box", 0.0))
    return r.count == 0, f"V = 0 count {r.count}"


CHECKS = [("leray projector", _leray), ("energy neutrality", _energy_neutral),
          ("RK4 step invariants", _step_invariants), ("trace routes and oracle", _trace_routes),
          ("constant chain", _constants), ("rho bound", _rho), ("CLR V=0", _clr)]


def run_all(seed: int = 0) -> list[dict]:
    grid = sp.make_grid(8)
    out = []
    for name, fn in CHECKS:
        ok, detail = fn(np.random.default_rng([seed, len(out)]), grid)
        out.append({"name": name, "pass": bool(ok), "detail": detail})
    return out
