"""Command-line entry point: ``brokenray <subcommand> [options]``.

Exit codes: 0 success, 1 validation or I/O failure, 2 numerical suite failure.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import checks, phantoms
from .config import ConfigError, RunConfig
from .cutoff import Cutoff, classify_beams
from .field import BumpAttenuation, FieldError, GridAttenuation, GridFunction, SupportRegion
from .geometry import GeometryError
from .normal_op import symbol_map, visible_set_map, write_covector_csv
from .recon import reconstruct, stability_experiment
from .transform import SinogramGrid

EXIT_OK, EXIT_INVALID, EXIT_SUITE = 0, 1, 2


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------

def _run_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.bit_reproducible:
        cfg.bit_reproducible = True
    return cfg


def _set_threads(n: int | None):
    if n is None:
        return
    import numba
    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def _require_out(args) -> Path:
    if not args.out:
        raise CliError("--out is required")
    return Path(args.out)


def _load_grid(path) -> GridFunction:
    if path is None:
        raise CliError("missing input grid")
    try:
        return GridFunction.load(path)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot read grid {path}: {exc}") from exc


def _load_sino(path) -> SinogramGrid:
    if path is None:
        raise CliError("missing input sinogram")
    try:
        return SinogramGrid.load(path)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot read sinogram {path}: {exc}") from exc


def _sigma(args, cfg: RunConfig):
    if getattr(args, "sigma", None) is None:
        return None
    g = _load_grid(args.sigma)
    return GridAttenuation(GridFunction(g.values, kind="sigma", margin=cfg.margin), cfg.margin)


def _cutoff(args, cfg: RunConfig) -> Cutoff:
    if getattr(args, "cutoff", None):
        return Cutoff.load(args.cutoff)
    E = cfg.access_set()
    if cfg.cutoff.get("kind", "unit") == "beams":
        return classify_beams(E, cfg.n_max, resolution=int(cfg.cutoff.get("resolution", 256)),
                              seed=cfg.seed)
    return Cutoff.unit(E, cfg.n_max)


def _operator(args, cfg: RunConfig, nx: int | None = None):
    setup = cfg.operator()
    if nx is not None:
        setup.nx = nx
    c = _cutoff(args, cfg)
    return setup.build(_sigma(args, cfg), None if c.is_unit else c)


def _check_support(f: GridFunction, margin: float):
    K = SupportRegion(margin, 1.0 - margin)
    if np.any(f.values[~K.grid_mask(f)] != 0.0):
        raise CliError(f"image does not vanish within the margin {margin} of the boundary")


def _write_json(path: Path, doc: dict):
    path.write_text(json.dumps(doc, indent=2))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_phantom(args, cfg: RunConfig) -> int:
    out = _require_out(args)
    try:
        params = json.loads(args.params) if args.params else {}
    except json.JSONDecodeError as exc:
        raise CliError(f"--params is not JSON: {exc}") from exc
    if args.kind == "gaussians":
        params.setdefault("seed", cfg.seed)
    try:
        f = phantoms.PHANTOMS[args.kind](cfg.nx, margin=cfg.margin, **params)
    except TypeError as exc:
        raise CliError(f"bad phantom parameters: {exc}") from exc
    f.save(out)
    print(f"phantom {args.kind} {cfg.nx}x{cfg.nx} mass {f.values.sum() * f.cell_area:.6g} -> {out}")
    return EXIT_OK


def cmd_forward(args, cfg: RunConfig) -> int:
    out = _require_out(args)
    f = _load_grid(args.f)
    _check_support(f, cfg.margin)
    op = _operator(args, cfg, f.nx)
    g = op.forward(f)
    g.save(out)
    print(f"forward: {g.shape[0]}x{g.shape[1]} samples, {int(g.mask.sum())} regular -> {out}")
    return EXIT_OK


def cmd_adjoint(args, cfg: RunConfig) -> int:
    out = _require_out(args)
    g = _load_sino(args.g)
    op = _operator(args, cfg)
    if not op.sino.compatible(g):
        raise CliError("sinogram sampling differs from the configuration")
    op.adjoint(g).save(out)
    print(f"adjoint -> {out}")
    return EXIT_OK


def cmd_normal(args, cfg: RunConfig) -> int:
    out = _require_out(args)
    f = _load_grid(args.f)
    _check_support(f, cfg.margin)
    op = _operator(args, cfg, f.nx)
    b, r = op.normal_split(f)
    GridFunction(b.values + r.values).save(out)
    if args.split:
        b.save(Path(str(out) + ".ballistic"))
        r.save(Path(str(out) + ".reflect"))
    print(f"normal -> {out}")
    return EXIT_OK


def cmd_beams(args, cfg: RunConfig) -> int:
    out = _require_out(args)
    c = classify_beams(cfg.access_set(), cfg.n_max,
                       resolution=int(cfg.cutoff.get("resolution", 256)), seed=cfg.seed)
    c.save(out)
    print(f"beams: {len(c.beams)} -> {out}")
    return EXIT_OK


def cmd_visible(args, cfg: RunConfig) -> int:
    out = _require_out(args)
    m = visible_set_map(cfg.access_set(), cfg.n_max, cfg.nx, args.ntheta)
    m.save(out)
    print(f"visible fraction {m.values.mean():.4f} -> {out}")
    if args.covectors:
        sm = symbol_map(cfg.access_set(), cfg.n_max, args.covector_nx, args.covector_nxi)
        write_covector_csv(args.covectors, sm)
        print(f"principal symbol at {len(sm)} covectors -> {args.covectors}")
    return EXIT_OK


def cmd_recon(args, cfg: RunConfig) -> int:
    out = _require_out(args)
    g = _load_sino(args.g)
    op = _operator(args, cfg)
    if not op.sino.compatible(g):
        raise CliError("sinogram sampling differs from the configuration")
    K = SupportRegion(cfg.margin, 1.0 - cfg.margin)
    t0 = time.time()
    res = reconstruct(g, cfg=cfg.recon(), K=K, op=op, return_result=True)
    res.f.save(out)
    report = {"iterations": res.iterations, "converged": res.converged,
              "relative_residual": res.relative_residual, "seconds": time.time() - t0}
    if args.truth:
        truth = _load_grid(args.truth)
        report["relative_error"] = float(np.linalg.norm(res.f.values - truth.values)
                                         / np.linalg.norm(truth.values))
    _write_json(Path(str(out) + ".report.json"), report)
    print(json.dumps(report))
    return EXIT_OK


def cmd_stability(args, cfg: RunConfig) -> int:
    out = _require_out(args)
    try:
        p = json.loads(args.params) if args.params else {}
    except json.JSONDecodeError as exc:
        raise CliError(f"--params is not JSON: {exc}") from exc
    sigma0 = BumpAttenuation(tuple(p.get("sigma_center", (0.5, 0.5))), p.get("sigma_radius", 0.25),
                             p.get("sigma_amplitude", 1.0))
    eta = BumpAttenuation(tuple(p.get("eta_center", (0.45, 0.55))), p.get("eta_radius", 0.2), 1.0,
                          aniso=p.get("eta_aniso", 0.0))
    ens = phantoms.ensemble(cfg.nx, args.ensemble, cfg.seed, margin=cfg.margin)
    K = SupportRegion(cfg.margin, 1.0 - cfg.margin)
    rep = stability_experiment(sigma0, eta, args.deltas, ens, None, setup=cfg.operator(), K=K)
    _write_json(out, rep.to_json())
    print(json.dumps(rep.to_json()))
    return EXIT_OK


def cmd_selftest(args, cfg: RunConfig) -> int:
    results = []
    op = _operator(args, cfg)
    results.append(checks.adjoint_identity(op, n_pairs=args.pairs, seed=cfg.seed))
    results.append(checks.split_exactness(op, seed=cfg.seed))
    if args.f and args.g:
        f = _load_grid(args.f)
        g = _load_sino(args.g)
        if not op.sino.compatible(g) or f.values.shape != op.grid_shape:
            raise CliError("selftest files do not match the configuration")
        results.append(checks.pair_identity(op, f, g))
    results.extend(checks.unfold_suite(args.rays, seed=cfg.seed).values())
    results.append(checks.measure_preservation(seed=cfg.seed))
    for r in results:
        print(r.line())
    if args.out:
        _write_json(Path(args.out), {r.name: {"value": r.value, "threshold": r.threshold,
                                              "ok": r.ok} for r in results})
    return EXIT_OK if all(r.ok for r in results) else EXIT_SUITE


COMMANDS = {
    "phantom": cmd_phantom, "forward": cmd_forward, "adjoint": cmd_adjoint,
    "normal": cmd_normal, "beams": cmd_beams, "visible": cmd_visible,
    "recon": cmd_recon, "stability": cmd_stability, "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output path")
    common.add_argument("--threads", type=int, help="numba worker threads")
    common.add_argument("--bit-reproducible", action="store_true",
                        help="require thread-count independent results")
    common.add_argument("--seed", type=int, help="override the configured seed")

    p = argparse.ArgumentParser(prog="brokenray", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("phantom", parents=[common], help="write a test image")
    s.add_argument("kind", choices=sorted(phantoms.PHANTOMS))
    s.add_argument("--params", help="JSON keyword arguments for the phantom")
    s = sub.add_parser("forward", parents=[common], help="apply the transform")
    s.add_argument("--f", required=True)
    s.add_argument("--sigma")
    s.add_argument("--cutoff", help="beam cutoff JSON from 'beams'")
    s = sub.add_parser("adjoint", parents=[common], help="apply the adjoint")
    s.add_argument("--g", required=True)
    s.add_argument("--sigma")
    s.add_argument("--cutoff")
    s = sub.add_parser("normal", parents=[common], help="apply the normal operator")
    s.add_argument("--f", required=True)
    s.add_argument("--sigma")
    s.add_argument("--cutoff")
    s.add_argument("--split", action="store_true", help="also write ballistic and reflect parts")
    sub.add_parser("beams", parents=[common], help="build beam cutoffs")
    s = sub.add_parser("visible", parents=[common], help="visible set map")
    s.add_argument("--ntheta", type=int, default=360)
    s.add_argument("--covectors", help="also write the principal symbol as x1,x2,xi,value CSV")
    s.add_argument("--covector-nx", type=int, default=16)
    s.add_argument("--covector-nxi", type=int, default=32)
    s = sub.add_parser("recon", parents=[common], help="reconstruct from a sinogram")
    s.add_argument("--g", required=True)
    s.add_argument("--sigma")
    s.add_argument("--cutoff")
    s.add_argument("--truth", help="reference image for the error report")
    s = sub.add_parser("stability", parents=[common], help="attenuation perturbation experiment")
    s.add_argument("--ensemble", type=int, default=10)
    s.add_argument("--deltas", type=float, nargs="+", default=[0.1, 0.03, 0.01, 0.003])
    s.add_argument("--params", help="JSON: sigma_center, sigma_radius, sigma_amplitude, eta_*")
    s = sub.add_parser("selftest", parents=[common], help="numerical self-checks")
    s.add_argument("--f", help="image for an extra adjoint check")
    s.add_argument("--g", help="sinogram for an extra adjoint check")
    s.add_argument("--pairs", type=int, default=5)
    s.add_argument("--rays", type=int, default=20_000)
    s.add_argument("--sigma")
    s.add_argument("--cutoff")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _run_config(args)
        _set_threads(args.threads)
        return COMMANDS[args.command](args, cfg)
    except (CliError, ConfigError, FieldError, GeometryError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
