"""Command line entry point.

Subcommands: ``sample-gamma``, ``sample-gibbs``, ``verify``, ``sweep``,
``constants``.  Exit codes: 0 success, 1 a check failed, 2 configuration or
usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import ConfigError, RunConfig, centred_cube_window, parse_config
from .interaction import bound_constants
from .io import write_json, write_samples, write_table

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gammagibbs",
                                description="Gamma random measures and their Gibbs "
                                            "perturbations: sampling and verification.")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def common(sp, out_help="output directory (default: config out_dir)"):
        sp.add_argument("--config", help="JSON config file (default: built-in defaults)")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", help=out_help)

    sp = sub.add_parser("sample-gamma", help="sample the (truncated) Gamma measure")
    common(sp)
    sp.add_argument("--n", type=int, default=1000, help="number of samples")
    common(sub.add_parser("sample-gibbs", help="run the finite-volume Gibbs chain"))
    sp = sub.add_parser("verify", help="run a verification suite")
    common(sp, "report JSON path (default: <out_dir>/report.json)")
    sp.add_argument("--suite", default=None,
                    help="free-measure, gibbs, bounds, negative-control or all "
                         "(default: the config's suites)")
    common(sub.add_parser("sweep", help="thermodynamic sweep over growing windows"))
    common(sub.add_parser("constants", help="print the bound constants"),
           "optional directory for constants.json")
    return p


def _seeded(cfg: RunConfig, seed: Optional[int]) -> RunConfig:
    if seed is None:
        return cfg
    from dataclasses import replace
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("--seed", "must be a 64-bit unsigned integer")
    return replace(cfg, seed=seed)


def _meta(cfg: RunConfig) -> dict:
    return {"theta": cfg.levy.theta, "trunc": cfg.levy.trunc, "seed": cfg.seed,
            "potential": cfg.potential.to_dict()}


def _constants_rows(cfg: RunConfig):
    c = bound_constants(cfg.potential, cfg.grid, cfg.levy.theta, cfg.eps_h, cfg.window)
    rows = [("m_phi", c.m_phi), ("edge g", c.edge), ("lambda0 = A - m b", c.lambda0),
            ("lambda0 (zero boundary) = A - 2 m b", c.lambda0_zero_bc),
            ("C_phi", c.C_phi), ("Upsilon_eps", c.Upsilon_eps), ("B_eps", c.B_eps),
            ("C_Delta", c.C_Delta), ("eps_h", c.eps_h), ("delta_fraction", c.delta_fraction),
            ("C_lambda", c.C_lambda), ("log C_lambda", c.log_C_lambda), ("vartheta", c.vartheta),
            ("admissible lambda interval", f"({c.admissible_interval[0]:g}, "
                                           f"{c.admissible_interval[1]:g}]"),
            ("eps_h admissible", c.eps_admissible)]
    return c, rows


def _cmd_constants(cfg, args) -> int:
    c, rows = _constants_rows(cfg)
    width = max(len(k) for k, _ in rows)
    for k, v in rows:
        print(f"{k:<{width}}  {v:g}" if isinstance(v, float) else f"{k:<{width}}  {v}")
    if args.out:
        write_json(Path(args.out) / "constants.json", c.to_dict())
    return EXIT_OK


def _cmd_sample_gamma(cfg, args) -> int:
    from .levy import sample_batch
    out = Path(args.out) if args.out else cfg.out_dir
    if args.n < 1:
        raise ConfigError("--n", "must be positive")
    batch = sample_batch(cfg.levy, cfg.window, args.n, np.random.default_rng(cfg.seed))
    path = write_samples(out / "gamma_samples.csv", batch, _meta(cfg))
    print(f"wrote {args.n} samples to {path}")
    return EXIT_OK


def _cmd_sample_gibbs(cfg, args) -> int:
    from .gibbs import run_specification
    out = Path(args.out) if args.out else cfg.out_dir
    res = run_specification(cfg.chain_config())
    path = write_samples(out / "gibbs_samples.csv", res.samples, _meta(cfg))
    write_json(out / "diagnostics.json", res.diagnostics)
    c, _ = _constants_rows(cfg)
    write_json(out / "constants.json", c.to_dict())
    acc = res.diagnostics["acceptance"]
    print(f"wrote {len(res.samples)} samples to {path}; acceptance "
          + ", ".join(f"{k} {v['rate']:.3f}" for k, v in acc.items())
          + f"; ESS {res.diagnostics['ess_mass']:.0f}")
    return EXIT_OK if res.diagnostics["energy_audit"]["passed"] else EXIT_CHECK_FAILED


def _cmd_verify(cfg, args) -> int:
    from .verification import SUITES, format_table, run_suite
    suites = [args.suite] if args.suite else cfg.suites
    for s in suites:
        if s not in SUITES:
            raise ConfigError("--suite", f"unknown suite {s!r}; choose from {', '.join(SUITES)}")
    out = Path(args.out) if args.out else cfg.out_dir / "report.json"
    results = [run_suite(s, cfg) for s in suites]
    report = {"version": 1, "seed": cfg.seed, "results": results,
              "success": all(r["success"] for r in results)}
    timings = {r["suite"]: r.pop("elapsed_s") for r in results}
    write_json(out, report)
    write_json(out.with_suffix(".meta.json"), {"elapsed_s": timings})
    for r in results:
        print(format_table(r))
    return EXIT_OK if report["success"] else EXIT_CHECK_FAILED


def _cmd_sweep(cfg, args) -> int:
    from .gibbs import sweep_table, thermodynamic_sweep
    out = Path(args.out) if args.out else cfg.out_dir
    if cfg.grid.dimension != 1:
        print("note: sweep windows are cubes_per_axis in every dimension", file=sys.stderr)
    windows = [centred_cube_window(n, cfg.grid) for n in cfg.sweep["cubes_per_axis"]]
    rep = thermodynamic_sweep(windows, cfg.boundary, cfg.chain_config(windows[0]),
                              lam=cfg.sweep["lam"])
    rows = sweep_table(rep)
    write_table(out / "sweep.csv", rows)
    write_json(out / "sweep.json", {"differences": rep["differences"], "flagged": rep["flagged"],
                                    "rows": rows})
    for r in rows:
        print(f"{r['n_cubes']:>4} {r['statistic']:<14} {r['mean']:.6g} +- {r['stderr']:.3g}")
    print("stabilization flag:", "RAISED" if rep["flagged"] else "clear")
    return EXIT_CHECK_FAILED if rep["flagged"] else EXIT_OK


_COMMANDS = {"constants": _cmd_constants, "sample-gamma": _cmd_sample_gamma,
             "sample-gibbs": _cmd_sample_gibbs, "verify": _cmd_verify, "sweep": _cmd_sweep}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = _seeded(parse_config(args.config), args.seed)
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        for k, v in err.values.items():
            print(f"  {k} = {v}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
