"""Command line driver: ``floquet-bergman <command> [--config FILE] [--set k=v ...]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 band sweep aborted, 5 verification failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io, verify
from .config import RunConfig
from .errors import ConfigError, FloquetBergmanError, SweepAborted
from .floquet import QuasimomentumGrid, forward
from .lattice import phi, varphi_with_bound, wp_prime_with_bound, wp_with_bound
from .multiplier import fit_beta
from .toeplitz import band_sweep, hausdorff, truncated_oracle, weyl_residual

log = logging.getLogger("floquet_bergman")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_SWEEP, EXIT_VERIFY = 0, 2, 3, 4, 5

HALF_PERIODS = (0.5, 0.5j, 0.5 + 0.5j)


def _evaluate(cfg, fn: str, z):
    z = np.asarray(z, dtype=complex)
    if fn == "wp":
        return wp_with_bound(z, cfg.truncation)
    if fn == "wp_prime":
        return wp_prime_with_bound(z, cfg.truncation)
    if fn == "varphi":
        return varphi_with_bound(z, cfg.pair, cfg.truncation)
    return phi(z, cfg.pair, cfg.truncation), np.zeros(z.shape)


def _elliptic_rows(z, val, bound):
    return [(p.real, p.imag, v.real, v.imag, b) for p, v, b in zip(z, val, bound)]


def cmd_elliptic(cfg, args, out: Path) -> int:
    if args.action == "eval":
        pts = np.array([complex(*p) for p in cfg["eval"]["points"]])
        val, bound = _evaluate(cfg, cfg["eval"]["function"], pts)
        io.write_csv(out / "elliptic_eval.csv", "elliptic", _elliptic_rows(pts, val, bound))
        return EXIT_OK
    if args.action == "zeros":
        pts = np.array(HALF_PERIODS)
        val, bound = wp_prime_with_bound(pts, cfg.truncation)
        io.write_csv(out / "elliptic_zeros.csv", "elliptic", _elliptic_rows(pts, val, bound))
        worst = float(np.abs(val).max())
        io.write_json(out / "elliptic_zeros.json",
                      {"max_abs_value": worst, "threshold": 1e-8, "certified": worst <= 1e-8})
        if worst > 1e-8:
            log.error("zero certification failed: max |wp'| = %.3g", worst)
            return EXIT_NUMERIC
        return EXIT_OK
    # multiplier
    fam = verify.family_for(cfg)
    beta, C, r2 = fit_beta(fam.pair, fam.trunc, fam.cell)
    io.write_json(out / "multiplier.json",
                  {**fam.to_dict(), "beta": beta, "beta_constant": C, "beta_fit_r2": r2})
    io.write_csv(out / "multiplier_levels.csv", "multiplier", fam.table.tolist())
    return EXIT_OK


def cmd_bands(cfg, args, out: Path) -> int:
    fam = verify.family_for(cfg)
    grid = QuasimomentumGrid(cfg["grid"]["resolution"], cfg["grid"]["periodic"])
    sym = cfg.symbol
    try:
        sp = band_sweep(sym, grid, fam, cfg.N, cfg["threads"])
    except SweepAborted as exc:
        log.error("%s", exc)
        return EXIT_SWEEP
    io.write_csv(out / "bands.csv", "bands", sp.rows())
    summary = sp.summary(sym, cfg.N)
    summary["failed_nodes"] = sp.failures
    io.write_json(out / "bands_summary.json", summary)
    return EXIT_OK


def cmd_oracle(cfg, args, out: Path) -> int:
    fam = verify.family_for(cfg)
    M = cfg["oracle"]["M"]
    sym = cfg.symbol
    lam = truncated_oracle(sym, M, fam, cfg.N)
    io.write_csv(out / "oracle.csv", "oracle", [(j, z.real, z.imag) for j, z in enumerate(lam)])
    bands = band_sweep(sym, QuasimomentumGrid(2 * M + 1, periodic=True), fam, cfg.N,
                       cfg["threads"])
    io.write_json(out / "oracle_summary.json",
                  {"M": M, "N": cfg.N, "dimension": len(lam), "symbol": sym.to_dict(),
                   "hausdorff_to_bands": hausdorff(lam, bands.points()),
                   "band_grid": bands.grid.to_dict()})
    return EXIT_OK


def cmd_weyl(cfg, args, out: Path) -> int:
    w = cfg["weyl"]
    fam = verify.family_for(cfg)
    p = weyl_residual(cfg.symbol, w["mu"], w["lambda"], w["n"], fam, cfg.N,
                      w["window_resolution"], w["M"])
    grid = QuasimomentumGrid(2 * w["M"] + 1, periodic=True)
    prof = forward(p.f, grid)
    io.write_csv(out / "weyl_profile.csv", "profile", prof.profile(fam.cell.weights).tolist())
    io.save_field(out / "weyl_field", prof)
    io.write_json(out / "weyl.json",
                  {"mu": list(p.mu), "lambda": [p.lam.real, p.lam.imag], "n": p.n,
                   "rho": p.rho, "mass": p.mass, "damping_defect": p.damping_defect,
                   "residual": p.residual})
    return EXIT_OK


def cmd_verify(cfg, args, out: Path) -> int:
    report = verify.run(cfg, args.suite)
    io.write_json(out / f"verify_{args.suite}.json", report)
    print(json.dumps({"passed": report["passed"], "failed": report["failed"]}))
    return EXIT_OK if report["passed"] else EXIT_VERIFY


COMMANDS = {"elliptic": cmd_elliptic, "bands": cmd_bands, "oracle": cmd_oracle,
            "weyl": cmd_weyl, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", help="JSON run configuration (defaults if omitted)")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="dotted override, value parsed as JSON")
    common.add_argument("--output-dir", "-o", help="overrides output_dir")
    common.add_argument("--threads", type=int, help="worker threads (env FLOQUET_BERGMAN_THREADS)")
    common.add_argument("--verbose", "-v", action="store_true")

    p = argparse.ArgumentParser(prog="floquet-bergman", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    e = sub.add_parser("elliptic", parents=[common], help="lattice function evaluations")
    e.add_argument("action", choices=["eval", "zeros", "multiplier"])
    sub.add_parser("bands", parents=[common], help="band sweep over the quasimomentum grid")
    sub.add_parser("oracle", parents=[common], help="truncated-domain reference spectrum")
    sub.add_parser("weyl", parents=[common], help="Weyl packet residual")
    v = sub.add_parser("verify", parents=[common], help="invariant suites")
    v.add_argument("--suite", default="all", choices=["all", *verify.SUITES])
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = list(args.overrides)
    if args.output_dir:
        overrides.append(f"output_dir={json.dumps(args.output_dir)}")
    threads = args.threads or os.environ.get("FLOQUET_BERGMAN_THREADS")
    if threads:
        overrides.append(f"threads={int(threads)}")
    try:
        cfg = (RunConfig.load(args.config, overrides) if args.config
               else RunConfig.from_dict({}, overrides))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](cfg, args, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloquetBergmanError, np.linalg.LinAlgError) as exc:
        msg, name = str(exc), type(exc).__name__
        print(f"numeric failure: {msg if msg.startswith(name) else name + ': ' + msg}",
              file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
