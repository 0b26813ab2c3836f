"""Command-line interface.

Subcommands:

- ``devia run SPEC``: run an experiment spec, write the JSON report.
- ``devia lemma-suite``: run the bound-check battery.
- ``devia jump-sim``: simulate the jump system (optionally tilted) to CSV.
- ``devia jump-rate``: evaluate the jump rate function of a CSV path.
- ``devia diff-sim``: simulate the interacting diffusion, summary CSV.
- ``devia diff-rate``: evaluate the diffusion rate function of a grid CSV.

Exit status is nonzero iff a declared criterion fails (or an input is
invalid).  Outputs are byte-identical for identical (config, seed)
regardless of the worker count.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from ..diff_analysis import rate_diffusion, solve_fokker_planck
from ..diff_sim import simulate_interacting
from ..jump_analysis import rate_I, rate_Ibar, solve_p
from ..jump_sim import simulate_jump, simulate_tilted
from ..paths import PathVec
from ..schwartz import HermiteFunction
from .config import load_config, resolve_kernels, resolve_model
from .experiments import run_experiment
from .io import read_grid_field, read_path_vec, write_jump_path
from .report import config_hash

__all__ = ["main"]


def _cmd_run(args) -> int:
    spec = load_config(args.spec)
    report = run_experiment(spec)
    if args.out:
        report.save(args.out)
    for line in report.summary_lines():
        print(line)
    print(f"runtime: {report.runtime_seconds:.2f}s", file=sys.stderr)
    return 0 if report.passed else 1


def _cmd_lemma_suite(args) -> int:
    from .lemmas import run_lemma_suite

    report = run_lemma_suite()
    if args.out:
        report.save(args.out)
    for line in report.summary_lines():
        print(line)
    print(f"runtime: {report.runtime_seconds:.2f}s", file=sys.stderr)
    return 0 if report.passed else 1


def _cmd_jump_sim(args) -> int:
    cfg = load_config(args.model)
    model = resolve_model(cfg)
    q0 = np.asarray(cfg.get("q0", [1.0 / model.K] * model.K), dtype=float)
    if args.control:
        from .experiments import _control_from_spec

        control_cfg = load_config(args.control)
        control = _control_from_spec(control_cfg, model.K, args.T)
        theta = float(control_cfg.get("theta", args.theta))
        a_m = args.m ** (-theta)
        p = solve_p(model, q0, args.T, args.p_steps)
        path, cost = simulate_tilted(model, args.m, q0, args.T, control, a_m, p, args.seed)
        write_jump_path(path, args.out)
        sidecar = Path(args.out).with_suffix(".cost.json")
        sidecar.write_text(
            json.dumps(
                {
                    "cost": cost,
                    "m": args.m,
                    "theta": theta,
                    "seed": args.seed,
                    "config_hash": config_hash(control_cfg),
                },
                sort_keys=True,
                indent=2,
            )
            + "\n"
        )
    else:
        path = simulate_jump(model, args.m, q0, args.T, args.seed)
        write_jump_path(path, args.out)
    print(f"wrote {args.out} ({path.n_events} events)")
    return 0


def _uniform_resample(path: PathVec) -> PathVec:
    diffs = np.diff(path.grid)
    if np.allclose(diffs, diffs[0], rtol=1e-8, atol=1e-14):
        return path
    grid = np.linspace(path.grid[0], path.grid[-1], len(path.grid))
    return PathVec(grid, path(grid))


def _cmd_jump_rate(args) -> int:
    cfg = load_config(args.model)
    model = resolve_model(cfg)
    raw = read_path_vec(args.eta)
    eta = _uniform_resample(raw)
    p0 = np.asarray(cfg.get("p0", cfg.get("q0", [1.0 / model.K] * model.K)), dtype=float)
    p = solve_p(model, p0, eta.T, max(len(eta.grid) - 1, 256))
    res_bar = rate_Ibar(model, p, eta)
    res = rate_I(model, p, eta)
    out = {
        "value": None if math.isinf(res.value) else res.value,
        "value_field_form": None if math.isinf(res_bar.value) else res_bar.value,
        "feasible": res.feasible,
        "message": res.message,
        "residual_ratio": [float(v) for v in res.residual_ratio],
        "grid_points": len(eta.grid),
        "resampled": eta is not raw,
        "config_hash": config_hash(cfg),
    }
    Path(args.out).write_text(json.dumps(out, sort_keys=True, indent=2) + "\n")
    print(f"rate value: {res.value} (feasible: {res.feasible})")
    return 0


def _cmd_diff_sim(args) -> int:
    cfg = load_config(args.kernels)
    kernels = resolve_kernels(cfg)
    stride = max(1, int(args.stride))
    path = simulate_interacting(
        kernels, args.m, args.x0, args.T, args.dt, args.seed, record_stride=stride
    )
    phis = [
        HermiteFunction.from_hermite_coeffs(c) for c in cfg.get("test_functions", [[1.0]])
    ]
    lines = [
        "time,mean,var," + ",".join(f"pairing_{k}" for k in range(len(phis)))
    ]
    for k, t in enumerate(path.times):
        x = path.positions[k]
        row = [repr(float(t)), repr(float(x.mean())), repr(float(x.var()))]
        row += [repr(float(np.mean(phi(x)))) for phi in phis]
        lines.append(",".join(row))
    out = Path(f"{args.out}_summary.csv")
    out.write_text("\n".join(lines) + "\n")
    print(f"wrote {out}")
    return 0


def _cmd_diff_rate(args) -> int:
    cfg = load_config(args.kernels)
    kernels = resolve_kernels(cfg)
    eta = read_grid_field(args.eta)
    rho = solve_fokker_planck(
        kernels,
        float(cfg.get("x0", args.x0)),
        float(eta.ts[-1]),
        float(eta.xs[0]),
        float(eta.xs[-1]),
        len(eta.xs),
        dt=eta.dt,
    )
    res = rate_diffusion(kernels, rho, eta)
    out = {
        "value": None if math.isinf(res.value) else res.value,
        "feasible": res.feasible,
        "message": res.message,
        "boundary_leak_ratio": [float(v) for v in res.residual_ratio],
        "config_hash": config_hash(cfg),
    }
    Path(args.out).write_text(json.dumps(out, sort_keys=True, indent=2) + "\n")
    print(f"rate value: {res.value} (feasible: {res.feasible})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="devia", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment spec")
    p.add_argument("spec")
    p.add_argument("--out", default=None, help="report JSON path")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("lemma-suite", help="run the bound-check battery")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_lemma_suite)

    p = sub.add_parser("jump-sim", help="simulate the jump system")
    p.add_argument("--model", required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--control", default=None, help="control config for a tilted run")
    p.add_argument("--theta", type=float, default=0.25)
    p.add_argument("--p-steps", type=int, default=1024, dest="p_steps")
    p.set_defaults(fn=_cmd_jump_sim)

    p = sub.add_parser("jump-rate", help="rate function of a jump fluctuation path")
    p.add_argument("--model", required=True)
    p.add_argument("--eta", required=True, help="path CSV (jump-sim schema)")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_jump_rate)

    p = sub.add_parser("diff-sim", help="simulate the interacting diffusion")
    p.add_argument("--kernels", required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--dt", type=float, default=None, help="step size (default T/2048)")
    p.add_argument("--x0", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(fn=_cmd_diff_sim)

    p = sub.add_parser("diff-rate", help="rate function of a diffusion fluctuation field")
    p.add_argument("--kernels", required=True)
    p.add_argument("--eta", required=True, help="grid CSV")
    p.add_argument("--x0", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_diff_rate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, RuntimeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
