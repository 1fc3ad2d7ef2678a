"""Command-line front end.

Usage::

    platelab analyze-load --config run.json --out results/
    platelab stability    --config run.json --out results/
    platelab minimize     --config run.json --out results/ --seed 3
    platelab scaling      --config run.json --out results/
    platelab embed        --config run.json --out results/

Every command writes ``report.json`` (deterministic for a given config and
seed), ``timing.json`` (wall time, deliberately separate), CSV series and
PNG figures into ``--out``.  Exit codes: 0 analysis completed (whatever the
verdict), 1 usage or configuration error, 2 internal inconsistency.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, plotting
from .catalog import make_load
from .config import SCHEMA_VERSION, config_hash, load_config, validate_config
from .elasticity import ElasticModel, KLFamily, RigidFamily, VKFamily, energy_h3d, scaling_study, total_h3d
from .errors import (
    ConfigError,
    DegenerateFitError,
    InconsistencyError,
    InputError,
    NonDevelopableError,
    NonIntegrableFieldError,
    PlateLabError,
    PreconditionError,
)
from .grid import Grid2D, ScalarField2D, VectorField2D
from .isometries import check_developable, isometric_embedding, sigmoid_ridge
from .loads import Load, coefficients, moment_matrix, normalize_mean
from .report import read_node_array, write_csv, write_node_array, write_report
from .rotations import classify_optimal_set, normal_space, tangent_space
from .stability import MinimizeOptions, analyze_stability, compatibility_check, minimize_total_vk

__all__ = ["main", "build_parser", "run"]

log = logging.getLogger("platelab")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"usage: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="platelab", description="Stability analysis of thin plates under dead loads.")
    p.add_argument("--version", action="version", version=f"platelab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("analyze-load", "moment matrix, optimal rotations, coefficients and compatibility"),
        ("stability", "affine certificate and sampling probes of the stability conditions"),
        ("minimize", "multistart minimization of the total Von Karman energy"),
        ("scaling", "thickness sweep of the three-dimensional energy with fitted slopes"),
        ("embed", "isometric embedding of a developable profile"),
    ):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", type=Path, help="JSON run configuration (defaults apply when omitted)")
        sp.add_argument("--out", type=Path, default=Path("platelab-out"), help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override the minimization seed")
        sp.add_argument("--verbose", "-v", action="count", default=0)
    return p


# ---------------------------------------------------------------- setup helpers


def _grid(cfg) -> Grid2D:
    return Grid2D(tuple(cfg["domain"]["bounds"]), cfg["grid"]["n1"], cfg["grid"]["n2"])


def _load(cfg, grid: Grid2D | None = None) -> Load:
    spec = cfg["load"]
    rtol = cfg["tolerances"]["mean_rtol"]
    if "file" in spec:
        fgrid, values = read_node_array(spec["file"])
        if values.ndim != 3 or values.shape[-1] != 3:
            raise ConfigError(f"{spec['file']}: a load needs 3 components per node")
        grid = _grid(cfg) if grid is None else grid
        if fgrid != grid:
            raise ConfigError(f"{spec['file']}: node array grid {fgrid.shape} {fgrid.bounds} differs from the config grid")
        return normalize_mean(VectorField2D(fgrid, values), rtol)
    grid = _grid(cfg) if grid is None else grid
    load = make_load(spec["catalog"], grid, **spec.get("params", {}))
    return Load(load.f, rtol)


def _model(cfg) -> ElasticModel:
    return ElasticModel(cfg["model"]["lambda"], cfg["model"]["mu"])


def _set_summary(ors) -> dict:
    d = ors.to_dict()
    d["tangent_basis"] = [t.w.tolist() for t in tangent_space(ors)] if ors.dim in (0, 1) else "all"
    d["normal_basis"] = [n.w.tolist() for n in normal_space(ors)] if ors.dim in (0, 1) else []
    return d


def _classify(cfg, load):
    tol = cfg["tolerances"]
    M = moment_matrix(load)
    return M, classify_optimal_set(load, M, tau_rank=tol["tau_rank"])


# ---------------------------------------------------------------- commands


def cmd_analyze_load(cfg, out: Path, seed) -> dict:
    load = _load(cfg)
    M, ors = _classify(cfg, load)
    res = {"moment_matrix": M.M, "optimal_set": _set_summary(ors), "max_value": ors.max_value, "dim": ors.dim}
    if ors.dim == 3:
        res["regime"] = "every rotation optimal (zero moment matrix)"
    else:
        res["coefficients"] = coefficients(M, ors.representative).to_dict()
        res["regime"] = "singleton" if ors.dim == 0 else "one-dimensional"
    comp = compatibility_check(load, ors, rtol=cfg["tolerances"]["compat_rtol"])
    res["compatibility"] = comp
    res["compatibility_ok"] = comp["ok"]
    grid = load.grid
    plotting.plot_load(grid, load.f.values, out / "load.png")
    write_node_array(out / "load.nodes", grid, load.f.values)
    return res


def cmd_stability(cfg, out: Path, seed) -> dict:
    load = _load(cfg)
    _, ors = _classify(cfg, load)
    opts = cfg["stability"]
    rep = analyze_stability(load, _model(cfg), ors, run_s2_probe=opts["s2_probe"], run_s1_probe=opts["s1_probe"],
                            compat_rtol=cfg["tolerances"]["compat_rtol"], probe_tol=cfg["tolerances"]["probe_tol"])
    res = rep.to_dict()
    res["dim"] = ors.dim
    rows = [(s["profile"], s.get("rotation_index", ""), s["J"]) for s in rep.s2_samples if "J" in s]
    write_csv(out / "s2_samples.csv", ["profile", "rotation_index", "J"], rows)
    plotting.plot_samples([r[2] for r in rows], out / "s2_samples.png")
    return res


def cmd_minimize(cfg, out: Path, seed) -> dict:
    load = _load(cfg)
    _, ors = _classify(cfg, load)
    model = _model(cfg)
    mo = cfg["minimize"]
    tol = cfg["tolerances"]
    comp = compatibility_check(load, ors, rtol=tol["compat_rtol"])
    if ors.dim not in (0, 1) or not comp["ok"]:
        why = "every rotation is optimal" if ors.dim == 3 else "compatibility condition fails"
        return {"verdict": "not applicable", "reason": why, "dim": ors.dim, "compatibility": comp}
    options = MinimizeOptions(
        n_starts=mo["n_starts"],
        seed=mo["seed"] if seed is None else seed,
        maxiter=mo["maxiter"],
        init_scale=mo["init_scale"],
        tau_grad=tol["tau_grad"],
        divergence_factor=tol["divergence_factor"],
        weight=1.0 + mo["epsilon"],
        ray_gammas=tuple(mo["ray_gammas"]),
        precondition=mo["precondition"],
        probe=mo["probe"],
    )
    r = minimize_total_vk(load, ors, model, options)
    res = r.to_dict()
    res["options"] = options.to_dict()
    res["dim"] = ors.dim
    q = r.quadruplet
    res["minimizer"] = {"R": q.R, "W": q.W.w}
    grid = load.grid
    write_node_array(out / "u.nodes", grid, q.u.values)
    write_node_array(out / "v.nodes", grid, q.v.values)
    write_csv(out / "history.csv", ["iteration", "J"], [(k + 1, float(x)) for k, x in enumerate(r.history)])
    plotting.plot_history(r.history, out / "history.png")
    plotting.plot_field(grid, q.v.values, out / "v.png", title="out-of-plane displacement", label="$v$")
    return res


def _profile(cfg, grid: Grid2D) -> ScalarField2D:
    e = cfg["embed"]
    kind = e["profile"]
    d = np.asarray(e["direction"], dtype=float)
    amp = float(e["amplitude"])
    X = grid.points
    if kind == "zero":
        return ScalarField2D(grid, np.zeros(grid.shape))
    if kind == "sine":
        return ScalarField2D(grid, amp * np.sin(e["frequency"] * (X @ d) + e["offset"]))
    if kind == "ridge":
        return sigmoid_ridge(grid, d, e["offset"], amp)
    H = np.asarray(e["hessian"], dtype=float)
    return ScalarField2D(grid, 0.5 * amp * np.einsum("...i,ij,...j->...", X, H, X))


def cmd_embed(cfg, out: Path, seed) -> dict:
    grid = _grid(cfg)
    v = _profile(cfg, grid)
    tol = cfg["tolerances"]
    check_developable(v, tol["dev_rtol"])
    emb = isometric_embedding(v, curl_rtol=tol["curl_rtol"], check=False)
    write_node_array(out / "y.nodes", grid, emb.y.values)
    write_node_array(out / "u.nodes", grid, emb.u.values)
    write_node_array(out / "residual.nodes", grid, emb.residual_map)
    plotting.plot_embedding(grid, emb.y.values, emb.residual_map, out / "embedding.png")
    return {"isometry_residual": emb.residual, "u_sup": emb.u_sup, "estimate": emb.estimate,
            "flat": bool(not np.any(v.values))}


def _family(cfg):
    s = cfg["scaling"]
    if s["family"] == "vk":
        return VKFamily()
    if s["family"] == "kl":
        return KLFamily(delta=s["delta"])
    return RigidFamily()


def cmd_scaling(cfg, out: Path, seed) -> dict:
    s = cfg["scaling"]
    model = _model(cfg)
    fam = _family(cfg)
    res = {"family": s["family"]}
    try:
        study = scaling_study(fam, s["h_values"], model, n=cfg["grid"]["n1"], n3=s["n3"],
                              bounds=tuple(cfg["domain"]["bounds"]), max_refinements=s["max_refinements"])
    except DegenerateFitError as exc:
        res.update({"degenerate": True, "reason": str(exc)})
        grid = _grid(cfg)
        E = [float(energy_h3d(fam.deformation(h, grid, s["n3"]), h, model)) for h in s["h_values"]]
        res["energy"] = E
        write_csv(out / "scaling.csv", ["h", "E_h", "J_h"], [(float(h), e, "nan") for h, e in zip(s["h_values"], E)])
        return res
    res.update(study.to_dict())
    res["degenerate"] = False
    grid = Grid2D(tuple(cfg["domain"]["bounds"]), study.grid_n, study.grid_n)
    J = []
    if "catalog" in cfg["load"]:
        load = _load(cfg, grid)
        J = [total_h3d(fam.deformation(h, grid, s["n3"]), h, load, model) for h in study.h_values]
    else:
        J = [float("nan")] * len(study.h_values)
    res["total_energy"] = J
    write_csv(out / "scaling.csv", ["h", "E_h", "J_h"],
              [(float(h), float(e), float(j)) for h, e, j in zip(study.h_values, study.energies, J)])
    plotting.plot_scaling(study.h_values, study.energies, study.slope, study.intercept, out / "scaling.png",
                          title=f"{s['family']} family")
    return res


COMMANDS = {
    "analyze-load": cmd_analyze_load,
    "stability": cmd_stability,
    "minimize": cmd_minimize,
    "scaling": cmd_scaling,
    "embed": cmd_embed,
}


def run(command: str, cfg: dict, out: Path, seed=None) -> dict:
    """Run one command and write its report; returns the report tree."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    echo = dict(cfg)
    try:
        results = COMMANDS[command](cfg, out, seed)
    except (PreconditionError, NonDevelopableError, NonIntegrableFieldError) as exc:
        # the failed precondition is itself the outcome worth recording
        write_report(out / "report.json", {"command": command, "config": echo, "seed": seed,
                                           "error": {"type": type(exc).__name__, "message": str(exc)}})
        raise
    report = {
        "artifact": {"name": "platelab", "version": __version__, "schema_version": SCHEMA_VERSION},
        "command": command,
        "config": echo,
        "config_hash": config_hash({"config": echo, "seed": seed}),
        "seed": seed,
        "tolerances": cfg["tolerances"],
        "results": results,
        "files": sorted(p.name for p in out.iterdir() if p.name not in ("report.json", "timing.json")),
    }
    write_report(out / "report.json", report)
    write_report(out / "timing.json", {"command": command, "wall_time_s": time.perf_counter() - t0})
    return report


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"platelab: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config) if args.config else validate_config({"schema_version": SCHEMA_VERSION})
        report = run(args.command, cfg, args.out, args.seed)
    except InconsistencyError as exc:
        print(f"platelab: internal inconsistency: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, InputError) as exc:
        print(f"platelab: {exc}", file=sys.stderr)
        return 1
    except (PreconditionError, NonDevelopableError, NonIntegrableFieldError) as exc:
        print(f"platelab: precondition failed: {exc}", file=sys.stderr)
        return 1
    except PlateLabError as exc:
        print(f"platelab: {exc}", file=sys.stderr)
        return 1
    print(f"platelab {args.command}: report written to {Path(args.out) / 'report.json'}")
    res = report["results"]
    for key in ("verdict", "dim", "slope", "isometry_residual"):
        if key in res:
            print(f"  {key}: {res[key]}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
