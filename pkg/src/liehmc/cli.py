"""Command-line front end: ``liehmc <command> [--config FILE] [--set key=value ...]``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, parse, parse_overrides, serialize
from .diagnostics import (
    batch_means,
    dh_scaling_study,
    exp_benchmark,
    mean_dh2_scaling,
    speed_ratio,
)
from .hmc import CapabilityError, DivergenceError, geodesic, hmc_run
from .linalg import DegenerateRowError
from .matexp import MatExpError
from .potentials import GradientMismatchError
from .spaces import (
    ad_invariance_check,
    algebra_form_residual,
    horizontal_form_residual,
    reductivity_residual,
    stabilizer_residual,
    symmetric_bracket_residual,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CAPABILITY = 3
EXIT_NUMERICAL = 4

#: Tolerances used by ``validate-space``.
SPACE_CHECK_TOL = {
    "reductivity": 1e-12,
    "stabilizer": 1e-10,
    "algebra_form": 1e-12,
    "horizontal_form": 1e-9,
    "ad_invariance": 1e-10,
}


def _g(x: float) -> str:
    return "%.17g" % x


def _header_lines(cfg: RunConfig, seed: int, extra: dict | None = None) -> list[str]:
    lines = [f"# liehmc {__version__}", f"# seed = {seed}"]
    for k, v in (extra or {}).items():
        lines.append(f"# {k} = {v}")
    # the output location does not affect the data, so it is left out to keep
    # files from different directories byte-comparable
    lines += ["# " + line for line in serialize(cfg).splitlines() if not line.startswith("output.dir ")]
    return lines


def _write_csv(path: Path, comments: list[str], header: list[str], rows) -> None:
    with open(path, "w", newline="\n") as fh:
        for c in comments:
            fh.write(c + "\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _finite(x: float):
    return x if math.isfinite(x) else str(x)


# -- commands ---------------------------------------------------------------


def _run_chain(args):
    cfg_text, seed = args
    cfg = parse(cfg_text)
    return hmc_run(cfg.hmc_config(seed), cfg.space(), cfg.potential())


def cmd_sample(cfg: RunConfig, out: Path, workers: int = 1) -> int:
    space = cfg.space()
    if not space.riemannian:
        raise CapabilityError(
            f"cannot sample on {space.name!r}: its kinetic form is pseudo-Riemannian, so "
            "exp(-K) cannot be normalised and momenta cannot be refreshed; use 'geodesic'"
        )
    n_chains = cfg["hmc.n_chains"]
    seeds = [(cfg.seed + i) % 2**64 for i in range(n_chains)]
    text = serialize(cfg)
    jobs = [(text, s) for s in seeds]
    if workers > 1 and n_chains > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chains = list(pool.map(_run_chain, jobs))
    else:
        chains = [_run_chain(j) for j in jobs]
    out.mkdir(parents=True, exist_ok=True)
    n = space.n
    for i, (seed, chain) in enumerate(zip(seeds, chains)):
        stem = out / f"chain_{i:03d}"
        if "csv" in cfg["output.formats"]:
            rows = (
                [str(j)] + [_g(x) for x in chain.points[j]] + [_g(chain.delta_h[j]), str(int(chain.accepted[j]))]
                for j in range(len(chain))
            )
            header = ["index"] + [f"x{k + 1}" for k in range(n)] + ["delta_h", "accepted"]
            _write_csv(stem.with_suffix(".csv"), _header_lines(cfg, seed, {"chain": i}), header, rows)
        if "json" in cfg["output.formats"]:
            emd, se = batch_means(chain.exp_minus_dh) if len(chain) >= 4 else (math.nan, math.nan)
            _write_json(
                stem.with_suffix(".json"),
                {
                    "command": "sample",
                    "version": __version__,
                    "seed": seed,
                    "chain": i,
                    "config": cfg.values,
                    "n_samples": len(chain),
                    "n_steps": chain.config.n_steps,
                    "step": chain.config.step,
                    "acceptance_rate": _finite(chain.acceptance_rate),
                    "mean_exp_minus_dh": _finite(emd),
                    "mean_exp_minus_dh_stderr": _finite(se),
                },
            )
        print(f"chain {i}: seed={seed} n={len(chain)} acceptance={chain.acceptance_rate:.4f}")
    return EXIT_OK


def cmd_geodesic(cfg: RunConfig, out: Path) -> int:
    space = cfg.space()
    hc = cfg.hmc_config()
    p = np.array(cfg["geodesic.momentum"] or [1.0] + [0.0] * (space.dim_p - 1))
    pts = geodesic(space, p, hc.step, hc.n_steps, exp_config=hc.exp)
    out.mkdir(parents=True, exist_ok=True)
    header = ["index", "t"] + [f"x{k + 1}" for k in range(space.n)]
    rows = ([str(i), _g(i * hc.step)] + [_g(x) for x in pts[i]] for i in range(len(pts)))
    if "csv" in cfg["output.formats"]:
        _write_csv(out / "geodesic.csv", _header_lines(cfg, cfg.seed), header, rows)
    if "json" in cfg["output.formats"]:
        _write_json(
            out / "geodesic.json",
            {
                "command": "geodesic",
                "version": __version__,
                "seed": cfg.seed,
                "config": cfg.values,
                "momentum": p,
                "n_steps": hc.n_steps,
                "step": hc.step,
                "closure_error": float(np.max(np.abs(pts[-1] - pts[0]))),
            },
        )
    print(f"geodesic on {space.name}: {hc.n_steps} steps of {hc.step:.6g}")
    return EXIT_OK


def cmd_scan(cfg: RunConfig, out: Path) -> int:
    steps = cfg["scan.step_sizes"]
    if len(steps) < 3:
        raise ConfigError(f"scan needs at least 3 step sizes for a slope fit, got {len(steps)}")
    space = cfg.space()
    pot = cfg.potential()
    hc = cfg.hmc_config()
    single = dh_scaling_study(space, pot, hc.tau, steps, hc.integrator, cfg.seed, hc.exp)
    if not space.riemannian:
        raise CapabilityError(f"the <dH^2> study needs momentum refreshment, unavailable on {space.name!r}")
    chains = mean_dh2_scaling(space, pot, hc.tau, steps, cfg["scan.n_samples"], cfg.seed, hc.integrator, hc.exp)
    out.mkdir(parents=True, exist_ok=True)
    if "csv" in cfg["output.formats"]:
        header = ["dt", "step", "abs_delta_h", "mean_delta_h2", "mean_exp_minus_dh", "exp_minus_dh_stderr"]
        rows = (
            [_g(single.nominal_step_sizes[i]), _g(single.step_sizes[i]), _g(single.values[i]), _g(chains.values[i]),
             _g(chains.mean_exp_minus_dh[i]), _g(chains.exp_minus_dh_stderr[i])]
            for i in range(len(steps))
        )
        _write_csv(out / "scan.csv", _header_lines(cfg, cfg.seed), header, rows)
    if "json" in cfg["output.formats"]:
        _write_json(
            out / "scan.json",
            {
                "command": "scan",
                "version": __version__,
                "seed": cfg.seed,
                "config": cfg.values,
                "abs_delta_h": single.to_dict(),
                "mean_delta_h2": chains.to_dict(),
                "slope": single.fitted_slope,
                "slope_mean_delta_h2": chains.fitted_slope,
            },
        )
    flag = "" if single.reliable else " (unreliable)"
    print(f"|dH| slope {single.fitted_slope:.3f} r2={single.r_squared:.4f}{flag}; "
          f"<dH^2> slope {chains.fitted_slope:.3f} r2={chains.r_squared:.4f}")
    return EXIT_OK


def cmd_exp_bench(cfg: RunConfig, out: Path) -> int:
    rows = exp_benchmark(cfg["bench.kinds"], cfg["bench.norms"], cfg["bench.n_random"], cfg.seed, cfg.exp_config())
    out.mkdir(parents=True, exist_ok=True)
    ratio = speed_ratio(rows, "so3", "rodrigues", "scale_square") if "so3" in cfg["bench.kinds"] else None
    if "csv" in cfg["output.formats"]:
        header = ["kind", "norm", "strategy", "n", "seconds_per_call", "max_error", "skipped"]
        body = ([r.kind, _g(r.norm), r.strategy, str(r.n), "%.3e" % r.seconds_per_call, _g(r.max_error), str(r.skipped)]
                for r in rows)
        _write_csv(out / "exp_bench.csv", _header_lines(cfg, cfg.seed), header, body)
    if "json" in cfg["output.formats"]:
        _write_json(
            out / "exp_bench.json",
            {
                "command": "exp-bench",
                "version": __version__,
                "seed": cfg.seed,
                "config": cfg.values,
                "max_error": max(r.max_error for r in rows),
                "rodrigues_speedup_over_scale_square": ratio,
                "rows": [r.__dict__ for r in rows],
            },
        )
    for r in rows:
        print(f"{r.kind:12s} |A|={r.norm:<5g} {r.strategy:14s} {r.seconds_per_call * 1e6:9.1f} us  err {r.max_error:.2e}")
    if ratio is not None:
        print(f"rodrigues speed-up over scale-and-square on so(3): {ratio:.2f}x")
    return EXIT_OK


def cmd_validate_space(cfg: RunConfig, out: Path) -> int:
    space = cfg.space()
    rng = np.random.default_rng(cfg.seed)
    results = {
        "reductivity": reductivity_residual(space),
        "stabilizer": stabilizer_residual(space),
        "algebra_form": algebra_form_residual(space),
        "horizontal_form": horizontal_form_residual(space, rng),
        "ad_invariance": ad_invariance_check(space, 100, rng),
    }
    report = {name: {"value": v, "tol": SPACE_CHECK_TOL[name], "ok": v <= SPACE_CHECK_TOL[name]} for name, v in results.items()}
    report["symmetric_bracket"] = {"value": symmetric_bracket_residual(space), "informational": True}
    pot = cfg.potential()
    try:
        err = pot.validate(space, rng)
        report["potential_gradient"] = {"value": err, "tol": 1e-5, "ok": True}
    except GradientMismatchError as exc:
        report["potential_gradient"] = {"value": str(exc), "tol": 1e-5, "ok": False}
    ok = all(r.get("ok", True) for r in report.values())
    for name, r in report.items():
        status = "info" if r.get("informational") else ("ok" if r["ok"] else "FAIL")
        print(f"{name:20s} {status:5s} {r['value']}")
    if "json" in cfg["output.formats"]:
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "validate_space.json",
                    {"command": "validate-space", "version": __version__, "seed": cfg.seed,
                     "space": space.name, "config": cfg.values, "checks": report, "ok": ok})
    return EXIT_OK if ok else EXIT_NUMERICAL


COMMANDS = {
    "sample": cmd_sample,
    "geodesic": cmd_geodesic,
    "scan": cmd_scan,
    "exp-bench": cmd_exp_bench,
    "validate-space": cmd_validate_space,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="liehmc", description="HMC on homogeneous spaces via matrix Lie groups.")
    ap.add_argument("--version", action="version", version=f"liehmc {__version__}")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", type=Path, help="key = value configuration file")
    ap.add_argument("--seed", type=int, help="override hmc.seed (unsigned 64-bit)")
    ap.add_argument("--out", type=Path, help="override output.dir")
    ap.add_argument("--workers", type=int, default=1, help="parallel chains for 'sample'")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a configuration key")
    return ap


def load_config(args) -> RunConfig:
    text = ""
    if args.config is not None:
        try:
            text = args.config.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    cfg = parse(text)
    overrides = parse_overrides(args.set)
    if args.seed is not None:
        overrides["hmc.seed"] = str(args.seed)
    if args.out is not None:
        overrides["output.dir"] = str(args.out)
    return cfg.with_overrides(overrides) if overrides else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg = load_config(args)
        out = Path(cfg["output.dir"])
        if args.command == "sample":
            return cmd_sample(cfg, out, args.workers)
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapabilityError as exc:
        print(f"capability error: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    except (MatExpError, DivergenceError, DegenerateRowError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
