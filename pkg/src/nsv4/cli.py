"""Batch entry point: ``nsv4 <subcommand> [--config FILE] [flags]``.

Settings are merged as dataclass defaults < per-subcommand defaults <
JSON config file < command-line flags. Each run writes into
``<out>/<subcommand>-<config hash>/``: a machine-readable report
(``report.json`` or ``report.csv``), ``summary.txt`` and ``meta.json``
(timestamps and versions, kept apart so reports are byte-reproducible).

Exit codes: 0 ok, 2 configuration error, 3 numerical failure,
4 invariant violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import inequalities as iq
from . import io
from . import solver as so
from . import spectral as sp
from . import tangent as tg

log = logging.getLogger("nsv4")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INVARIANT = 0, 2, 3, 4

SUBCOMMANDS = ("simulate", "decay-test", "steady-test", "contraction-test", "trace", "rho-check",
               "clr-check", "bound", "selftest")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    subcommand: str = "simulate"
    n_per_dim: int = 16
    box_length: float = 2 * math.pi
    nu: float = 0.5
    dt: float = 1e-2
    t_final: float | None = 10.0
    save_every: int = 1
    checkpoint_every: int = 0
    forcing: str = "random"
    forcing_file: str | None = None
    forcing_kmax: float = 2.0
    g_norm: float = 1.0
    shear_amplitude: float = 1.0
    u0_norm: float = 1.0
    u0_file: str | None = None
    seed: int = 0
    seeds: int = 10
    pair_distance: float = 1e-4
    n_max: int = 8
    reortho_every: int = 1
    spin_up: float | None = None
    trials: int = 100
    clr_kind: str = "box"
    clr_depths: list = field(default_factory=lambda: [0.0, 5.0, 10.0, 20.0, 30.0])
    clr_radius: float = 1.0
    clr_box: float = 6.0
    clr_resolution: int = 16
    out: str = "runs"
    format: str = "json"

    def validate(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {self.subcommand!r}")
        positive = ["box_length", "nu", "dt", "u0_norm", "pair_distance", "clr_radius", "clr_box",
                    "forcing_kmax"]
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.t_final is not None and not self.t_final > 0:
            raise ConfigError("t_final must be positive")
        if self.g_norm < 0:
            raise ConfigError("g_norm must be nonnegative")
        for name in ["save_every", "n_max", "reortho_every", "trials", "seeds"]:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.n_per_dim < 8 or self.n_per_dim % 2:
            raise ConfigError("n_per_dim must be even and >= 8")
        if self.forcing not in ("random", "zero", "shear", "file"):
            raise ConfigError(f"unknown forcing {self.forcing!r}")
        if self.forcing == "file" and not self.forcing_file:
            raise ConfigError("forcing 'file' needs forcing_file")
        if self.format not in ("json", "csv"):
            raise ConfigError("format must be json or csv")
        if self.clr_kind not in ("box", "separable"):
            raise ConfigError("clr_kind must be box or separable")
        return self

    def physics(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("out")
        return d

    @property
    def hash(self) -> str:
        return io.config_hash(self.physics())

    def grid(self):
        return sp.make_grid(self.n_per_dim, self.box_length)

    def forcing_spec(self):
        if self.forcing == "zero":
            return so.ForcingSpec.zero()
        if self.forcing == "shear":
            return so.ForcingSpec.shear(self.nu, self.shear_amplitude)
        if self.forcing == "file":
            return so.ForcingSpec.from_file(self.forcing_file, self.g_norm)
        return so.ForcingSpec.random_low_mode(self.g_norm, self.seed, self.forcing_kmax)

    def solver_config(self, t_final=None):
        return so.SolverConfig(nu=self.nu, dt=self.dt, t_final=t_final or self.t_final,
                               forcing=self.forcing_spec(), save_every=self.save_every)

    def initial_field(self, grid, seed=None):
        if self.u0_file:
            u = io.read_field(self.u0_file)
            sp.check_same_grid(u, sp.SpectralVectorField.zeros(grid))
            return sp.leray_project(u)
        rng = np.random.default_rng(self.seed if seed is None else seed)
        return sp.random_solenoidal(grid, rng, slope=1.0, h1_norm=self.u0_norm)


SUBCOMMAND_DEFAULTS = {
    "decay-test": {"forcing": "zero", "t_final": 10.0},
    "steady-test": {"forcing": "shear", "t_final": None},
    "contraction-test": {"n_per_dim": 8, "dt": 2e-2, "t_final": 10.0},
    "trace": {"n_per_dim": 8, "nu": 1.0, "dt": 5e-2, "t_final": 120.0, "spin_up": 20.0},
    "rho-check": {"n_per_dim": 16},
}


def build_config(args: argparse.Namespace) -> RunConfig:
    values = dict(SUBCOMMAND_DEFAULTS.get(args.subcommand, {}))
    if args.config:
        try:
            values.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    for f in dataclasses.fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    values["subcommand"] = args.subcommand
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(**values).validate()


# ---------------------------------------------------------------------------
# subcommands; each returns (report, summary lines, ok)


def _simulate(cfg: RunConfig, out: Path):
    grid = cfg.grid()
    sc = cfg.solver_config()
    u0 = cfg.initial_field(grid)
    lg = so.simulate(u0, sc, checkpoint_every=cfg.checkpoint_every)
    for s, f in lg.checkpoints:
        io.save_checkpoint(out / f"ckpt_{s:08d}.nsv4", f, step=s, t=s * cfg.dt, cfg_hash=cfg.hash,
                           seed=cfg.seed, extra={"enstrophy0": float(lg.enstrophy[0])})
    io.save_checkpoint(out / "final.nsv4", lg.final, step=int(lg.steps[-1]), t=float(lg.times[-1]),
                       cfg_hash=cfg.hash, seed=cfg.seed)
    io.write_csv(out / "trajectory.csv", lg.columns())
    slack = 1e-8 * np.maximum(1.0, lg.bound_rhs)
    violations = int(np.count_nonzero(lg.enstrophy > lg.bound_rhs + slack))
    report = {"g_hminus1": lg.g_hminus1, "samples": len(lg), "max_abs_residual": float(np.max(np.abs(lg.residual))),
              "dissipative_bound_violations": violations, "final_enstrophy": float(lg.enstrophy[-1]),
              "ball_radius_sq": lg.g_hminus1**2 / cfg.nu**2}
    lines = [f"{len(lg)} samples to t={lg.times[-1]:g}", f"max |energy residual| = {report['max_abs_residual']:.3e}",
             f"dissipative-bound violations: {violations}"]
    return report, lines, violations == 0


def _decay(cfg: RunConfig, out: Path):
    grid = cfg.grid()
    sc = dataclasses.replace(cfg.solver_config(), forcing=so.ForcingSpec.zero())
    lg = so.simulate(cfg.initial_field(grid), sc)
    exact = lg.enstrophy[0] * np.exp(-2 * cfg.nu * lg.times)
    err = float(np.max(np.abs(lg.enstrophy - exact)) / lg.enstrophy[0])
    io.write_csv(out / "trajectory.csv", lg.columns())
    ok = err <= 1e-6
    rep = {"max_rel_energy_error": err, "tolerance": 1e-6, "pass": ok}
    return rep, [f"{'PASS' if ok else 'FAIL'} max relative energy error {err:.3e} (tol 1e-6)"], ok


def _steady(cfg: RunConfig, out: Path):
    grid = cfg.grid()
    t_final = cfg.t_final or 50.0 / cfg.nu
    sc = dataclasses.replace(cfg.solver_config(t_final), forcing=so.ForcingSpec.shear(cfg.nu, cfg.shear_amplitude),
                             save_every=max(cfg.save_every, 100))
    ustar = so.shear_field(grid, cfg.shear_amplitude)
    g = sc.forcing.build(grid)
    rhs_norm = float(np.max(np.abs(so.rhs(ustar, g, cfg.nu).coeffs)))
    lg = so.simulate(sp.SpectralVectorField.zeros(grid), sc, g=g)
    err = sp.h1dot_norm(lg.final - ustar)
    ok = err <= 1e-8 and rhs_norm <= 1e-12
    rep = {"h1_error": err, "rhs_at_steady_state": rhs_norm, "T": t_final, "pass": ok}
    return rep, [f"{'PASS' if ok else 'FAIL'} |grad(u(T) - u*)| = {err:.3e}, |rhs(u*)| = {rhs_norm:.3e}"], ok


def _contraction(cfg: RunConfig, out: Path):
    grid = cfg.grid()
    sc = cfg.solver_config()
    g = sc.forcing.build(grid)
    c_emb = so.embedding_constant(grid, seed=cfg.seed)
    rows, worst = [], 0.0
    for s in range(cfg.seeds):
        rng = np.random.default_rng([cfg.seed, s])
        u2 = sp.random_solenoidal(grid, rng, slope=1.0, h1_norm=cfg.u0_norm)
        dv = sp.random_solenoidal(grid, rng, slope=1.0, h1_norm=cfg.pair_distance)
        res = so.contraction_check(u2 + dv, u2, sc, c_emb=c_emb, g=g)
        m = float(np.max(res.ratio))
        worst = max(worst, m)
        rows.append({"seed": s, "max_ratio": m, "final_distance": float(res.diff_h1[-1])})
    ok = worst <= 1 + 1e-6
    rep = {"c_emb": c_emb, "pairs": rows, "worst_ratio": worst, "tolerance": 1 + 1e-6, "pass": ok}
    return rep, [f"{'PASS' if ok else 'FAIL'} worst Gronwall ratio {worst:.6f} over {cfg.seeds} pairs "
                 f"(C_emb = {c_emb:.4f})"], ok


def _trace(cfg: RunConfig, out: Path):
    grid = cfg.grid()
    sc = cfg.solver_config()
    g = sc.forcing.build(grid)
    u0 = cfg.initial_field(grid)
    reps = tg.q_sweep(u0, sc, cfg.n_max, reortho_every=cfg.reortho_every, spin_up=cfg.spin_up,
                      seed=cfg.seed, g=g)
    b = iq.dimension_bound(sp.hminus1_norm(g), cfg.nu)
    try:
        crossing = tg.dimension_crossing(reps)
    except tg.CrossingNotFound as exc:
        crossing = None
        log.warning("%s", exc)
    ok = all(r.bound_respected for r in reps) and crossing is not None and \
        crossing <= math.ceil(b.bound_exact) + 1
    if cfg.format == "csv":
        io.write_csv(out / "traces.csv", {"t": reps[0].times, **{f"trace_{r.n}": r.traces for r in reps}})
    rep = {"reports": [r.to_dict() for r in reps], "crossing": crossing, "dimension_bound": b.to_dict(),
           "pass": ok}
    lines = [f"q({r.n}) = {r.q_n:+.6f}   bound {r.bound_q_n:+.6f}   {'ok' if r.bound_respected else 'VIOLATED'}"
             for r in reps]
    lines.append(f"crossing n* = {crossing if crossing is not None else f'> {cfg.n_max}'}; "
                 f"dimension bound {b.bound_exact:.4f}")
    return rep, lines, ok


def _rho(cfg: RunConfig, out: Path):
    grid = cfg.grid()
    rows, worst = [], 0.0
    for t in range(cfg.trials):
        rng = np.random.default_rng([cfg.seed, t])
        n = 1 + t % cfg.n_max
        fr = tg.TangentFrame.random(grid, n, rng, slope=float(rng.uniform(0.0, 3.0)))
        r = iq.rho_bound_check(fr)
        worst = max(worst, r.ratio)
        rows.append(dataclasses.asdict(r))
    ok = worst <= 1.0
    if cfg.format == "csv":
        io.write_csv(out / "trials.csv", {k: [r[k] for r in rows] for k in rows[0]})
    return ({"trials": rows, "worst_ratio": worst, "pass": ok},
            [f"{'PASS' if ok else 'FAIL'} worst |rho|_2 / bound = {worst:.4e} over {cfg.trials} frames"], ok)


def _clr(cfg: RunConfig, out: Path):
    rep = iq.clr_cross_check(4, depths=cfg.clr_depths, kind=cfg.clr_kind, radius=cfg.clr_radius,
                             box=cfg.clr_box, resolution=cfg.clr_resolution)
    ok = rep["all_within_bound"]
    lines = [f"depth {r['spec']['depth']:g}: count {r['count']}  bound {r['bound']:.3f}" for r in rep["results"]]
    lines.append(f"{'PASS' if ok else 'FAIL'} worst ratio {rep['worst_ratio']:.4f}")
    rep["pass"] = ok
    return rep, lines, ok


def _bound(cfg: RunConfig, out: Path):
    b = iq.dimension_bound(cfg.g_norm, cfg.nu)
    table = iq.constants(4)
    rep = {**b.to_dict(), "constants": table.to_dict(), "twelve_L": 12 * table.L_upper}
    lines = [f"12 L_0,4 = {12 * table.L_upper:.6f} (<= 0.23)",
             f"dim bound: exact {b.bound_exact:.6f}, rounded {b.bound_rounded:.6f}"]
    return rep, lines, True


def _selftest(cfg: RunConfig, out: Path):
    from .selftest import run_all
    results = run_all(seed=cfg.seed)
    ok = all(r["pass"] for r in results)
    lines = [f"{'PASS' if r['pass'] else 'FAIL'} {r['name']}: {r['detail']}" for r in results]
    return {"checks": results, "pass": ok}, lines, ok


HANDLERS = {"simulate": _simulate, "decay-test": _decay, "steady-test": _steady,
            "contraction-test": _contraction, "trace": _trace, "rho-check": _rho, "clr-check": _clr,
            "bound": _bound, "selftest": _selftest}


def run(cfg: RunConfig) -> int:
    """Execute one configured subcommand and write its artifacts; returns the exit code."""
    try:
        cfg.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.out) / f"{cfg.subcommand}-{cfg.hash}"
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    try:
        report, lines, ok = HANDLERS[cfg.subcommand](cfg, out)
    except (so.BlowUpError, tg.RankDeficiencyError, tg.TraceIdentityError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    envelope = {"subcommand": cfg.subcommand, "config": cfg.physics(), "config_hash": cfg.hash,
                "seed": cfg.seed, "result": report}
    if cfg.format == "csv" and "reports" not in report:
        flat = {k: [v] for k, v in report.items() if np.isscalar(v)}
        if flat:
            io.write_csv(out / "report.csv", flat)
    io.dump_json(envelope, out / "report.json")
    (out / "summary.txt").write_text("\n".join([f"nsv4 {cfg.subcommand} [{cfg.hash}] seed={cfg.seed}"] + lines) + "\n")
    io.dump_json({"started": t0, "elapsed_s": time.time() - t0, "version": __version__,
                  "python": platform.python_version(), "numpy": np.__version__}, out / "meta.json")
    for line in lines:
        print(line)
    print(f"artifacts: {out}")
    return EXIT_OK if ok else EXIT_INVARIANT


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nsv4", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON file with RunConfig fields")
        s.add_argument("--out")
        s.add_argument("--format", choices=("json", "csv"))
        s.add_argument("--seed", type=int)
        s.add_argument("--n-per-dim", dest="n_per_dim", type=int)
        s.add_argument("--box-length", dest="box_length", type=float)
        s.add_argument("--nu", type=float)
        s.add_argument("--dt", type=float)
        s.add_argument("--t", dest="t_final", type=float)
        s.add_argument("--save-every", dest="save_every", type=int)
        s.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
        s.add_argument("--forcing", choices=("random", "zero", "shear", "file"))
        s.add_argument("--forcing-file", dest="forcing_file")
        s.add_argument("--forcing-kmax", dest="forcing_kmax", type=float)
        s.add_argument("--g-norm", dest="g_norm", type=float)
        s.add_argument("--shear-amplitude", dest="shear_amplitude", type=float)
        s.add_argument("--u0-norm", dest="u0_norm", type=float)
        s.add_argument("--u0-file", dest="u0_file")
        s.add_argument("--seeds", type=int, help="number of pairs (contraction-test)")
        s.add_argument("--pair-distance", dest="pair_distance", type=float)
        s.add_argument("--n-max", dest="n_max", type=int)
        s.add_argument("--reortho-every", dest="reortho_every", type=int)
        s.add_argument("--spin-up", dest="spin_up", type=float)
        s.add_argument("--trials", type=int)
        s.add_argument("--clr-kind", dest="clr_kind", choices=("box", "separable"))
        s.add_argument("--clr-depths", dest="clr_depths", type=lambda x: [float(v) for v in x.split(",")])
        s.add_argument("--clr-radius", dest="clr_radius", type=float)
        s.add_argument("--clr-box", dest="clr_box", type=float)
        s.add_argument("--clr-resolution", dest="clr_resolution", type=int)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
    except (ConfigError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
