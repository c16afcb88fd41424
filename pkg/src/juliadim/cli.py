"""Command-line front end: locate, coordinate checks, sigma, IFS, dimension,
rendering, and the whole pipeline in one run.

Subcommands
-----------
locate      saddle-node parameter of z**d + c in a real bracket
fatou-test  functional-equation and symmetry residuals of phi/psi
sigma       Lavaurs phases sigma* whose orbit lands on the anchor chain
ifs         branch window build + separation check + CSV table
dimension   theta bracket and Moran bounds, emitted as a JSON record
render      Julia or Julia-Lavaurs membership grid (PNG, PPM, CSV mask)
pipeline    all stages in order; one report JSON plus image/CSV artifacts

Exit codes: 0 success; 1 usage or bad configuration; 2 mathematical failure
(nothing found, or a check failed); 3 numerical failure (non-convergence).
The environment variable JULIADIM_WORKERS caps render parallelism.

Config files are flat ``key = value`` text ('#' starts a comment line);
``serialize_config`` emits the canonical form, and parsing then serializing
is idempotent.  Flags mirror the RunConfig fields and take precedence over
the file.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from juliadim import dimension as dm
from juliadim import kernels
from juliadim.dynamics import (
    NEWTON_TOL,
    ConvergenceError,
    Family,
    PeriodError,
    iterate,
)
from juliadim.fatou import BasinError, FatouEvaluator
from juliadim.ifs import (
    build_system,
    build_window,
    choose_base_ball,
    export_branches,
    separation_check,
)
from juliadim.lavaurs import LavaursMap, critical_derivative, find_sigma, lavaurs_eval
from juliadim.parabolic import local_form, locate_parabolic
from juliadim.render import (
    centered_spec,
    render_julia,
    render_julia_lavaurs,
    write_mask_csv,
    write_png,
    write_ppm,
)

__all__ = [
    "CONJUGATION_TOL",
    "CheckFailure",
    "RunConfig",
    "fatou_residuals",
    "main",
    "parse_config",
    "serialize_config",
]

# the symmetry phi(conj z) = conj(phi(z)) is exact for real maps; its
# numerical defect is pure roundoff and gets a tighter gate than the
# functional equations
CONJUGATION_TOL = 1e-10


class CheckFailure(RuntimeError):
    """A computed quantity failed its mathematical acceptance gate."""


# ----------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class RunConfig:
    """One pipeline run: family selection, window sizes, grids, tolerances.

    Serialized as a flat key = value file; every field is also a flag.
    """

    d: int = 2
    k: int = 3
    bracket: tuple = (-1.8, -1.7)
    j_max: int = 10
    window_n: int = 30
    window_r: int = 30
    grid_center: complex = 0j
    grid_half_extent: float = 2.0
    grid_n: int = 512
    coord_tol: float = 1e-10
    render_tol: float = 1e-9
    residual_tol: float = 1e-8
    moran_tol: float = 1e-6
    suite_size: int = 256
    max_iter: int = 400
    m_max: int = 1
    persistence_n: int = 100
    out_dir: str = "runs/ref"

    def __post_init__(self):
        if self.d < 2 or self.d % 2:
            raise ValueError("d must be an even integer >= 2")
        if self.k < 2:
            raise ValueError("k must be >= 2")
        lo, hi = float(self.bracket[0]), float(self.bracket[1])
        if not lo < hi:
            raise ValueError(f"bracket must satisfy lo < hi, got ({lo}, {hi})")
        object.__setattr__(self, "bracket", (lo, hi))
        if self.j_max < 1:
            raise ValueError("j_max must be >= 1")
        if self.window_n < 1 or self.window_r < 1:
            raise ValueError("window sizes must be >= 1")
        if not self.grid_half_extent > 0:
            raise ValueError("grid_half_extent must be positive")
        if self.grid_n < 1:
            raise ValueError("grid_n must be >= 1")
        for name in ("coord_tol", "render_tol", "residual_tol", "moran_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.suite_size < 1:
            raise ValueError("suite_size must be >= 1")
        if self.max_iter < 100:
            raise ValueError("max_iter must be >= 100")
        if self.m_max < 0:
            raise ValueError("m_max must be >= 0")
        if self.persistence_n < 1:
            raise ValueError("persistence_n must be >= 1")
        if not self.out_dir:
            raise ValueError("out_dir must be nonempty")


def _field_to_text(name: str, value) -> str:
    if name == "bracket":
        return f"{value[0]!r},{value[1]!r}"
    if isinstance(value, complex):
        return repr(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _field_from_text(name: str, text: str):
    kind = RunConfig.__dataclass_fields__[name].type
    text = text.strip()
    try:
        if name == "bracket":
            parts = text.split(",")
            if len(parts) != 2:
                raise ValueError("expected LO,HI")
            return (float(parts[0]), float(parts[1]))
        if kind == "complex":
            return complex(text)
        if kind == "float":
            return float(text)
        if kind == "int":
            return int(text)
        return text
    except ValueError as exc:
        raise ValueError(f"config key {name}: cannot parse {text!r}") from exc


def parse_config(text: str) -> RunConfig:
    """Parse a flat key = value config; unknown or repeated keys are errors."""
    seen: dict = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"config line {ln}: expected key = value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in RunConfig.__dataclass_fields__:
            raise ValueError(f"config line {ln}: unknown key {key!r}")
        if key in seen:
            raise ValueError(f"config line {ln}: duplicate key {key!r}")
        seen[key] = _field_from_text(key, val)
    return RunConfig(**seen)


def serialize_config(cfg: RunConfig) -> str:
    """Canonical text form; parse -> serialize is idempotent."""
    lines = ["# juliadim run configuration (key = value; '#' starts a comment)"]
    for f in dataclasses.fields(RunConfig):
        lines.append(f"{f.name} = {_field_to_text(f.name, getattr(cfg, f.name))}")
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------
# shared helpers


def _iso_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _emit(payload: dict, path=None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _pick_solution(sols):
    """Deterministic reference phase: the smallest chain length wins."""
    if not sols:
        raise CheckFailure("no sigma solution found up to the requested j_max")
    return sorted(sols, key=lambda s: (s.j, s.sigma_star))[0]


def _sigma_residual(ev: FatouEvaluator, sol) -> tuple:
    """(|g(0) - x_target|, |F-chain endpoint - alpha|, Im g(0))."""
    pd = ev.pd
    lm = LavaursMap(ev, sol.sigma_star)
    g0 = lavaurs_eval(lm, 0.0 + 0.0j)
    chain = iterate(pd.family, g0, sol.j, pd.sign)
    return abs(g0 - sol.x_target), abs(chain - pd.alpha), abs(g0.imag)


def fatou_residuals(ev: FatouEvaluator, n_points: int = 1000,
                    seed: int = 0) -> dict:
    """Max residuals of the two functional equations and the real symmetry.

    The attracting suite draws n_points inside the petal disk (forward
    invariant, so membership is free); the repelling suite walks psi over
    a fixed rectangle around the gate.  Raises ConvergenceError when any
    sample point fails to evaluate cleanly.
    """
    pd = ev.pd
    rng = np.random.default_rng(seed)

    # attracting side: phi(F(z)) - phi(z) = 1 and phi(conj z) = conj phi(z)
    rad = 0.75 * ev.delta * np.sqrt(rng.uniform(0.0, 1.0, n_points))
    ang = rng.uniform(0.0, 2.0 * np.pi, n_points)
    zs = ev.petal_center + rad * np.exp(1j * ang)
    fz = kernels.iterate_points(zs, pd.d, pd.c0, pd.sign, pd.k, ev.esc_r)
    phi, _, st0, _ = ev.phi_minus_batch(zs)
    phi_f, _, st1, _ = ev.phi_minus_batch(fz)
    phi_c, _, st2, _ = ev.phi_minus_batch(np.conj(zs))
    if int(np.max(st0)) or int(np.max(st1)) or int(np.max(st2)):
        bad = int(np.sum((st0 != 0) | (st1 != 0) | (st2 != 0)))
        raise ConvergenceError(
            f"{bad} attracting-suite points failed to evaluate")
    r_phi = float(np.max(np.abs(phi_f - phi - 1.0)))
    r_conj = float(np.max(np.abs(phi_c - np.conj(phi))))

    # repelling side: psi(w+1) = F(psi(w)) on a rectangle reaching from
    # deep in the sector (small shift counts) to the gate (several genuine
    # forward pushes); further right the push legitimately leaves the
    # bounded evaluation window
    side = int(np.ceil(np.sqrt(n_points)))
    xs = np.linspace(-6.0, 0.0, side)
    ys = np.linspace(-2.0, 2.0, side)
    ws = (xs[None, :] + 1j * ys[:, None]).ravel()[:n_points]
    z1, _, su0 = ev.psi_plus_batch(ws)
    z2, _, su1 = ev.psi_plus_batch(ws + 1.0)
    if int(np.max(su0)) or int(np.max(su1)):
        bad = int(np.sum((su0 != 0) | (su1 != 0)))
        raise ConvergenceError(
            f"{bad} repelling-suite points escaped the evaluation window")
    f_z1 = kernels.iterate_points(z1, pd.d, pd.c0, pd.sign, pd.k, ev.esc_r)
    r_psi = float(np.max(np.abs(z2 - f_z1)))

    return {
        "phi_functional": r_phi,
        "psi_functional": r_psi,
        "conjugation": r_conj,
        "suite_points": int(n_points),
    }


# ----------------------------------------------------------------------
# subcommand bodies


def cmd_locate(args) -> int:
    pd = locate_parabolic(args.d, args.k, args.bracket)
    payload = pd.to_dict()
    payload["tolerances"] = {"cycle_residual": NEWTON_TOL}
    _emit(payload, args.out)
    return 0


def cmd_fatou_test(args) -> int:
    pd = locate_parabolic(args.d, args.k, args.bracket)
    ev = FatouEvaluator(pd, tol=args.coord_tol)
    res = fatou_residuals(ev, n_points=args.suite_size, seed=args.seed)
    problems = []
    if not res["phi_functional"] < args.residual_tol:
        problems.append(f"phi functional equation: {res['phi_functional']:.3e}")
    if not res["psi_functional"] < args.residual_tol:
        problems.append(f"psi functional equation: {res['psi_functional']:.3e}")
    if not res["conjugation"] < CONJUGATION_TOL:
        problems.append(f"conjugation symmetry: {res['conjugation']:.3e}")
    payload = {
        "c0": pd.c0,
        "d": pd.d,
        "k": pd.k,
        "ok": not problems,
        "residuals": res,
        "tolerances": {
            "conjugation": CONJUGATION_TOL,
            "coord_tol": args.coord_tol,
            "residual_tol": args.residual_tol,
        },
    }
    _emit(payload, args.out)
    if problems:
        raise CheckFailure("coordinate residuals above gate: " + "; ".join(problems))
    return 0


def cmd_sigma(args) -> int:
    pd = locate_parabolic(args.d, args.k, args.bracket)
    ev = FatouEvaluator(pd, tol=args.coord_tol)
    sols = find_sigma(ev, args.j_max)
    rows = []
    for s in sorted(sols, key=lambda s: (s.j, s.sigma_star)):
        r_x, r_chain, im_g0 = _sigma_residual(ev, s)
        lm = LavaursMap(ev, s.sigma_star)
        rows.append({
            "j": s.j,
            "sigma_star": s.sigma_star,
            "x_target": s.x_target,
            "residual_target": r_x,
            "residual_chain": r_chain,
            "imag_g0": im_g0,
            "critical_derivative": critical_derivative(lm),
        })
    ok = any(r["residual_chain"] < args.residual_tol for r in rows)
    payload = {
        "c0": pd.c0,
        "d": pd.d,
        "k": pd.k,
        "j_max": args.j_max,
        "ok": ok,
        "solutions": rows,
        "tolerances": {
            "coord_tol": args.coord_tol,
            "residual_tol": args.residual_tol,
        },
    }
    _emit(payload, args.out)
    if not rows:
        raise CheckFailure(f"no sigma solution with j <= {args.j_max}")
    if not ok:
        raise CheckFailure("no sigma solution meets the chain residual gate")
    return 0


def _build_branch_window(pd, ev, j_max: int, window_n: int, window_r: int):
    sol = _pick_solution(find_sigma(ev, j_max))
    lm = LavaursMap(ev, sol.sigma_star)
    ball = choose_base_ball(pd)
    sysd = build_system(lm, sol, ball)
    branches, wrep = build_window(sysd, n_max=window_n, r_max=window_r)
    return sol, ball, sysd, branches, wrep


def cmd_ifs(args) -> int:
    pd = locate_parabolic(args.d, args.k, args.bracket)
    ev = FatouEvaluator(pd, tol=args.coord_tol)
    sol, ball, _, branches, wrep = _build_branch_window(
        pd, ev, args.j_max, args.window_n, args.window_r)
    sep = separation_check(branches, ball)
    if args.out_csv:
        export_branches(branches, args.out_csv)
    payload = {
        "c0": pd.c0,
        "d": pd.d,
        "k": pd.k,
        "sigma_star": sol.sigma_star,
        "j": sol.j,
        "window": {
            "n0": wrep.n0,
            "n_max": wrep.n_max,
            "r_max": wrep.r_max,
            "count": wrep.count,
            "skipped": len(wrep.skipped),
            "t0": wrep.t0,
            "prefactor": wrep.prefactor,
            "c1": wrep.c1,
        },
        "separation": {
            "ok": sep.ok,
            "inside": sep.inside,
            "disjoint": sep.disjoint,
            "min_gap": sep.min_gap,
            "max_radius": sep.max_radius,
            "worst_pair": [list(p) for p in sep.worst_pair],
        },
        "ok": bool(sep.ok and wrep.c1 < 10.0),
        "tolerances": {"coord_tol": args.coord_tol},
    }
    _emit(payload, args.out)
    if not sep.ok:
        raise CheckFailure(
            f"separation check failed (min_gap {sep.min_gap:.3e}, "
            f"inside={sep.inside})")
    if not wrep.c1 < 10.0:
        raise CheckFailure(f"derivative-law tightness c1 = {wrep.c1:.2f} >= 10")
    return 0


def cmd_dimension(args) -> int:
    pd = locate_parabolic(args.d, args.k, args.bracket)
    ev = FatouEvaluator(pd, tol=args.coord_tol)
    sol, _, _, branches, _ = _build_branch_window(
        pd, ev, args.j_max, args.window_n, args.window_r)
    theta_br = dm.theta_bracket(branches)
    moran = dm.moran_bounds(branches, tol=args.moran_tol)
    record = dm.dimension_record(
        pd, sol.sigma_star, (args.window_n, args.window_r), theta_br, moran,
        timestamp=_iso_now())
    record["theta_estimate"] = 0.5 * (theta_br[0] + theta_br[1])
    record["theta_target"] = 2.0 * pd.d / (pd.d + 1.0)
    record["tolerances"] = {
        "coord_tol": args.coord_tol,
        "moran_tol": args.moran_tol,
    }
    _emit(record, args.out)
    return 0


def cmd_render(args) -> int:
    pd = locate_parabolic(args.d, args.k, args.bracket)
    spec = centered_spec(args.grid_center, args.grid_half_extent, args.grid_n)
    sigma = None
    if args.mode == "julia":
        fam = Family(pd.d, pd.c0 + args.eps)
        grid = render_julia(fam, spec, max_iter=args.max_iter)
        c_used = fam.c
    else:
        ev = FatouEvaluator(pd, tol=args.render_tol)
        sigma = args.sigma
        if sigma is None:
            sigma = _pick_solution(find_sigma(ev, args.j_max)).sigma_star
        grid = render_julia_lavaurs(pd, sigma, spec, args.m_max,
                                    max_iter=args.max_iter, ev=ev)
        c_used = pd.c0
    prefix = Path(args.out)
    if prefix.parent != Path(""):
        prefix.parent.mkdir(parents=True, exist_ok=True)
    write_png(grid, str(prefix) + ".png")
    write_ppm(grid, str(prefix) + ".ppm")
    write_mask_csv(grid, str(prefix) + "_mask.csv")
    payload = {
        "mode": args.mode,
        "c": c_used,
        "eps": args.eps if args.mode == "julia" else None,
        "sigma": sigma,
        "m_max": args.m_max if args.mode == "lavaurs" else None,
        "grid": {
            "n": args.grid_n,
            "center": repr(args.grid_center),
            "half_extent": args.grid_half_extent,
            "pixel_size": spec.pixel_size,
        },
        "members": int(np.sum(grid.cells != 0)),
        "undetermined_fraction": grid.undetermined_fraction,
        "outputs": [str(prefix) + s for s in (".png", ".ppm", "_mask.csv")],
        "tolerances": {
            "max_iter": args.max_iter,
            "render_tol": args.render_tol if args.mode == "lavaurs" else None,
            "dem_threshold": spec.pixel_size,
        },
    }
    _emit(payload, None)
    return 0


# ----------------------------------------------------------------------
# pipeline


class _StageAbort(Exception):
    def __init__(self, name: str, exc: Exception):
        super().__init__(f"stage {name}: {exc}")
        self.name = name
        self.exc = exc


class _Runner:
    """Runs named stages, records pass/fail + details, keeps the report
    on disk current after every stage so aborts leave diagnostics behind."""

    def __init__(self, report: dict, path: Path):
        self.report = report
        self.path = path

    def flush(self) -> None:
        text = json.dumps(self.report, indent=2, sort_keys=True) + "\n"
        self.path.write_text(text)

    def run(self, name: str, fn):
        print(f"[{name}]", flush=True)
        try:
            value, detail = fn()
        except _StageAbort:
            raise
        except Exception as exc:
            self.report["stages"].append({
                "name": name,
                "ok": False,
                "detail": {"error": f"{type(exc).__name__}: {exc}"},
            })
            self.flush()
            raise _StageAbort(name, exc) from exc
        ok = bool(detail.get("ok", True))
        self.report["stages"].append(
            {"name": name, "ok": ok, "detail": detail})
        self.flush()
        if not ok:
            raise _StageAbort(name, CheckFailure(
                f"recorded residuals failed their gates: {detail}"))
        return value


def _config_from_args(args) -> RunConfig:
    data = {}
    if args.config:
        data.update(dataclasses.asdict(parse_config(Path(args.config).read_text())))
    for f in dataclasses.fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            data[f.name] = v
    return RunConfig(**data)


def cmd_pipeline(args) -> int:
    cfg = _config_from_args(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(serialize_config(cfg))

    target = 2.0 * cfg.d / (cfg.d + 1.0)
    report = {
        "config": {f.name: _field_to_text(f.name, getattr(cfg, f.name))
                   for f in dataclasses.fields(RunConfig)},
        "theta_target": target,
        "stages": [],
        "timestamps": {"created": _iso_now()},
    }
    runner = _Runner(report, out / "report.json")

    try:
        def s_locate():
            pd = locate_parabolic(cfg.d, cfg.k, cfg.bracket)
            det = {"c0": pd.c0, "alpha": pd.alpha, "sign": pd.sign,
                   "multiplier": abs(pd.cycle.multiplier),
                   "cycle_residual_tol": NEWTON_TOL}
            return pd, det

        pd = runner.run("locate", s_locate)

        def s_local_form():
            pd2 = local_form(pd)
            det = {"a_coef": pd2.a_coef, "b_coef": pd2.b_coef, "A": pd2.A,
                   "ok": bool(pd2.a_coef > 0 and pd2.A > 0)}
            return pd2, det

        pd = runner.run("local_form", s_local_form)

        def s_fatou():
            ev = FatouEvaluator(pd, tol=cfg.coord_tol)
            res = fatou_residuals(ev, n_points=cfg.suite_size, seed=0)
            ok = (res["phi_functional"] < cfg.residual_tol
                  and res["psi_functional"] < cfg.residual_tol
                  and res["conjugation"] < CONJUGATION_TOL)
            det = dict(res)
            det.update(ok=ok, residual_tol=cfg.residual_tol,
                       conjugation_tol=CONJUGATION_TOL,
                       coord_tol=cfg.coord_tol, delta=ev.delta)
            return ev, det

        ev = runner.run("fatou_selftests", s_fatou)

        def s_sigma():
            sol = _pick_solution(find_sigma(ev, cfg.j_max))
            r_x, r_chain, _ = _sigma_residual(ev, sol)
            det = {"j": sol.j, "sigma_star": sol.sigma_star,
                   "x_target": sol.x_target, "residual_chain": r_chain,
                   "residual_target": r_x,
                   "ok": bool(r_chain < cfg.residual_tol)}
            return sol, det

        sol = runner.run("find_sigma", s_sigma)

        def s_window():
            lm = LavaursMap(ev, sol.sigma_star)
            ball = choose_base_ball(pd)
            sysd = build_system(lm, sol, ball)
            branches, wrep = build_window(
                sysd, n_max=cfg.window_n, r_max=cfg.window_r)
            export_branches(branches, out / "branches.csv")
            det = {"n0": wrep.n0, "count": wrep.count,
                   "skipped": len(wrep.skipped), "t0": wrep.t0,
                   "prefactor": wrep.prefactor, "c1": wrep.c1,
                   "ok": bool(wrep.count > 0 and wrep.c1 < 10.0)}
            return (ball, sysd, branches), det

        ball, sysd, branches = runner.run("ifs_window", s_window)

        def s_separation():
            sep = separation_check(branches, ball)
            det = {"min_gap": sep.min_gap, "max_radius": sep.max_radius,
                   "inside": sep.inside, "disjoint": sep.disjoint,
                   "worst_pair": [list(p) for p in sep.worst_pair],
                   "ok": bool(sep.ok)}
            return sep, det

        runner.run("separation", s_separation)

        def s_theta():
            theta_br = dm.theta_bracket(branches)
            est = 0.5 * (theta_br[0] + theta_br[1])
            det = {"bracket": list(theta_br), "estimate": est,
                   "target": target,
                   "ok": bool(theta_br[0] <= target <= theta_br[1])}
            return theta_br, det

        theta_br = runner.run("theta_estimate", s_theta)

        def s_moran():
            moran = dm.moran_bounds(branches, tol=cfg.moran_tol)
            det = {"t_lower": moran.t_lower, "t_upper": moran.t_upper,
                   "branch_count": moran.branch_count,
                   "crossed_target": bool(moran.t_lower > target),
                   "moran_tol": cfg.moran_tol}
            return moran, det

        moran = runner.run("moran_bounds", s_moran)

        def s_persistence():
            subset = sorted(branches,
                            key=lambda b: (b.n + abs(b.r), b.n, b.r))[:4]
            rep = dm.persistence_check(sysd, subset, cfg.persistence_n)
            det = {"N": rep.N, "eps": rep.eps,
                   "labels": [list(l) for l in rep.labels],
                   "max_defect": rep.max_defect,
                   "min_expansion": rep.min_expansion,
                   "t_lower_perturbed": rep.t_lower_perturbed,
                   "t_lower_unperturbed": rep.t_lower_unperturbed,
                   "ok": bool(rep.expansion_ok)}
            return rep, det

        runner.run("persistence_check", s_persistence)

        def s_renders():
            spec = centered_spec(cfg.grid_center, cfg.grid_half_extent,
                                 cfg.grid_n)
            gj = render_julia(pd.family, spec, max_iter=cfg.max_iter)
            write_png(gj, out / "julia.png")
            write_ppm(gj, out / "julia.ppm")
            write_mask_csv(gj, out / "julia_mask.csv")
            ev_r = FatouEvaluator(pd, tol=cfg.render_tol)
            gl = render_julia_lavaurs(pd, sol.sigma_star, spec, cfg.m_max,
                                      max_iter=cfg.max_iter, ev=ev_r)
            write_png(gl, out / "julia_lavaurs.png")
            write_ppm(gl, out / "julia_lavaurs.ppm")
            write_mask_csv(gl, out / "julia_lavaurs_mask.csv")
            det = {
                "grid_n": cfg.grid_n,
                "pixel_size": spec.pixel_size,
                "julia_members": int(np.sum(gj.cells != 0)),
                "lavaurs_members": int(np.sum(gl.cells != 0)),
                "julia_undetermined": gj.undetermined_fraction,
                "lavaurs_undetermined": gl.undetermined_fraction,
                "max_iter": cfg.max_iter,
                "render_tol": cfg.render_tol,
                "m_max": cfg.m_max,
            }
            return None, det

        runner.run("renders", s_renders)

    except _StageAbort as ab:
        print(f"pipeline aborted at stage {ab.name}: {ab.exc}",
              file=sys.stderr)
        raise

    record = dm.dimension_record(
        pd, sol.sigma_star, (cfg.window_n, cfg.window_r), theta_br, moran,
        timestamp=_iso_now())
    record["theta_estimate"] = 0.5 * (theta_br[0] + theta_br[1])
    record["theta_target"] = target
    record["tolerances"] = {
        "coord_tol": cfg.coord_tol,
        "moran_tol": cfg.moran_tol,
        "residual_tol": cfg.residual_tol,
    }
    report["record"] = record
    runner.flush()
    print(f"pipeline complete: report at {out / 'report.json'}")
    print(f"theta bracket [{theta_br[0]:.5f}, {theta_br[1]:.5f}] "
          f"(target {target:.5f}); Moran t in "
          f"[{moran.t_lower:.5f}, {moran.t_upper:.5f}]")
    return 0


# ----------------------------------------------------------------------
# argument plumbing


def _bracket_arg(text: str) -> tuple:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(
            f"bracket must be LO,HI with LO < HI, got {text!r}")
    try:
        lo, hi = float(parts[0]), float(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"bracket must be a pair of reals, got {text!r}")
    return (lo, hi)


def _complex_arg(text: str) -> complex:
    try:
        return complex(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected a complex literal like -0.5+0.1j, got {text!r}")


def _add_family_flags(p, with_defaults: bool = True):
    dflt = (lambda v: v) if with_defaults else (lambda v: None)
    p.add_argument("--d", type=int, default=dflt(2),
                   help="family degree (even)")
    p.add_argument("--k", type=int, default=dflt(3), help="cycle period")
    p.add_argument("--bracket", type=_bracket_arg, default=dflt((-1.8, -1.7)),
                   metavar="LO,HI", help="real parameter bracket")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="juliadim",
        description="parabolic parameters, Fatou coordinates, Lavaurs "
                    "branch systems, dimension brackets, and set renders "
                    "for z**d + c")
    sub = ap.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("locate", help="find the saddle-node parameter")
    _add_family_flags(p)
    p.add_argument("--out", default=None, help="JSON output path (default stdout)")
    p.set_defaults(func=cmd_locate)

    p = sub.add_parser("fatou-test",
                       help="functional-equation residual suites")
    _add_family_flags(p)
    p.add_argument("--coord-tol", type=float, default=1e-10)
    p.add_argument("--residual-tol", type=float, default=1e-8)
    p.add_argument("--suite-size", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_fatou_test)

    p = sub.add_parser("sigma", help="Lavaurs phases on the anchor chain")
    _add_family_flags(p)
    p.add_argument("--j-max", type=int, default=10)
    p.add_argument("--coord-tol", type=float, default=1e-10)
    p.add_argument("--residual-tol", type=float, default=1e-8)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sigma)

    p = sub.add_parser("ifs", help="branch window and separation check")
    _add_family_flags(p)
    p.add_argument("--j-max", type=int, default=10)
    p.add_argument("--window-n", type=int, default=30)
    p.add_argument("--window-r", type=int, default=30)
    p.add_argument("--coord-tol", type=float, default=1e-10)
    p.add_argument("--out-csv", default=None, help="branch table CSV path")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_ifs)

    p = sub.add_parser("dimension", help="theta bracket and Moran bounds")
    _add_family_flags(p)
    p.add_argument("--j-max", type=int, default=10)
    p.add_argument("--window-n", type=int, default=30)
    p.add_argument("--window-r", type=int, default=30)
    p.add_argument("--coord-tol", type=float, default=1e-10)
    p.add_argument("--moran-tol", type=float, default=1e-6)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_dimension)

    p = sub.add_parser("render", help="Julia / Julia-Lavaurs membership grid")
    _add_family_flags(p)
    p.add_argument("--mode", choices=("julia", "lavaurs"), default="julia")
    p.add_argument("--eps", type=float, default=0.0,
                   help="parameter perturbation (julia mode)")
    p.add_argument("--sigma", type=float, default=None,
                   help="Lavaurs phase (lavaurs mode; default: smallest-j "
                        "solution)")
    p.add_argument("--j-max", type=int, default=10)
    p.add_argument("--m-max", type=int, default=1,
                   help="Lavaurs applications per pixel (lavaurs mode)")
    p.add_argument("--grid-n", type=int, default=512)
    p.add_argument("--grid-center", type=_complex_arg, default=0j)
    p.add_argument("--grid-half-extent", type=float, default=2.0)
    p.add_argument("--max-iter", type=int, default=400)
    p.add_argument("--render-tol", type=float, default=1e-9)
    p.add_argument("--out", required=True,
                   help="output prefix: writes PREFIX.png/.ppm/_mask.csv")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("pipeline", help="run every stage, write one report")
    p.add_argument("--config", default=None, help="key = value config file")
    _add_family_flags(p, with_defaults=False)
    p.add_argument("--j-max", type=int, default=None)
    p.add_argument("--window-n", type=int, default=None)
    p.add_argument("--window-r", type=int, default=None)
    p.add_argument("--grid-center", type=_complex_arg, default=None)
    p.add_argument("--grid-half-extent", type=float, default=None)
    p.add_argument("--grid-n", type=int, default=None)
    p.add_argument("--coord-tol", type=float, default=None)
    p.add_argument("--render-tol", type=float, default=None)
    p.add_argument("--residual-tol", type=float, default=None)
    p.add_argument("--moran-tol", type=float, default=None)
    p.add_argument("--suite-size", type=int, default=None)
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--m-max", type=int, default=None)
    p.add_argument("--persistence-n", type=int, default=None)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_pipeline)

    return ap


def _merge_negative_values(argv):
    """Join ``--flag -1.8,-1.7`` into ``--flag=-1.8,-1.7``.

    argparse reads any token starting with '-' as an option; values like
    negative brackets or complex literals need the '=' form, which this
    shim applies mechanically (no option name starts with a digit or dot).
    """
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        nxt = argv[i + 1] if i + 1 < len(argv) else None
        if (tok.startswith("--") and "=" not in tok and nxt
                and len(nxt) > 1 and nxt[0] == "-" and nxt[1] in "0123456789."):
            out.append(f"{tok}={nxt}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    argv = _merge_negative_values(list(argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return 1
    try:
        return int(args.func(args))
    except _StageAbort as ab:
        code = _exit_code_for(ab.exc)
        if code is None:
            raise ab.exc
        return code
    except Exception as exc:  # noqa: BLE001 -- single mapping point
        code = _exit_code_for(exc)
        if code is None:
            raise
        print(f"error: {exc}", file=sys.stderr)
        return code


def _exit_code_for(exc: Exception):
    if isinstance(exc, PeriodError):
        return 2
    if isinstance(exc, CheckFailure):
        return 2
    if isinstance(exc, (ConvergenceError, BasinError)):
        return 3
    if isinstance(exc, (ValueError, OSError)):
        return 1
    return None


if __name__ == "__main__":
    sys.exit(main())
