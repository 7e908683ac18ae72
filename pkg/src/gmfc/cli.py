"""Command-line entry point: simulate, cutnorm, experiment."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .config import check_keys, dataclass_from_table, load_toml, require
from .controls import (
    ActionBox,
    RelaxedPairControl,
    bang_bang,
    interaction_constant,
    interaction_table,
    lift_to_nplayer,
    product_form,
    regular_affine,
    regular_constant,
    regular_threshold,
)
from .dynamics import (
    InitSpec,
    SimConfig,
    default_workers,
    simulate,
    write_cost_summary_csv,
    write_costs_csv,
    write_trajectories_csv,
)
from .errors import ConfigError, GmfcError, SizeCapExceeded
from .kernels import EXACT_CAP, cut_norm_exact, cut_norm_lower_bound, load_matrix_csv, load_step_kernel, sample_from_graphon
from .metrics import mc_summary
from .models import model_by_id

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CAP, EXIT_INCONCLUSIVE = 0, 1, 2, 3, 4, 5
VERDICT_EXIT = {ex.PASS: EXIT_OK, ex.FAIL: EXIT_FAIL, ex.INCONCLUSIVE: EXIT_INCONCLUSIVE}


def _fmt(x) -> str:
    return format(float(x), ".17g")


# ------------------------------------------------------------------ simulate

SIM_SECTIONS = ("model", "kernel", "controls", "sim", "init")


def _box(spec: dict, default: ActionBox, section: str) -> ActionBox:
    if "action_box" not in spec:
        return default
    lohi = spec["action_box"]
    if not isinstance(lohi, list) or len(lohi) != 2:
        raise ConfigError("action_box must be [lo, hi]", field=f"{section}.action_box")
    return ActionBox.interval(float(lohi[0]), float(lohi[1]))


def _params(spec: dict, section: str) -> tuple:
    p = spec.get("params", [])
    if not isinstance(p, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in p):
        raise ConfigError("params must be a flat list of numbers", field=f"{section}.params")
    return tuple(float(v) for v in p)


def build_gamma(spec: dict, model, relaxed: bool):
    section = "controls.gamma"
    check_keys(spec, ("family", "params", "action_box"), section)
    family = require(spec, "family", section)
    params = _params(spec, section)
    box = _box(spec, model.int_box, section)
    if relaxed:
        return ex.make_relaxed(family, params, box)
    if family == "constant":
        return interaction_constant(params[0] if params else box.upper[0], box)
    if family in ("bang_bang", "bang_bang_flipped"):
        phi = model.params.get("phi_fn")
        if phi is None:
            raise ConfigError("bang_bang needs a model with a Phi map", field=f"{section}.family")
        return bang_bang(phi, box, threshold=params[0] if params else 0.0, flipped=family.endswith("flipped"))
    if family == "product_form":
        if len(params) != 5:
            raise ConfigError("product_form needs 5 params (c, a1, b1, a2, b2)", field=f"{section}.params")
        return product_form(*params, box=box)
    if family == "table":
        m = int(round(np.sqrt(len(params))))
        if m < 1 or m * m != len(params):
            raise ConfigError("table params must hold m*m values", field=f"{section}.params")
        return interaction_table(np.reshape(params, (m, m)), box)
    raise ConfigError(f"unknown interaction control family {family!r}", field=f"{section}.family")


def build_alpha(spec: dict | None, model):
    if spec is None:
        return None
    section = "controls.alpha"
    check_keys(spec, ("family", "params", "action_box"), section)
    family = require(spec, "family", section)
    params = _params(spec, section)
    box = _box(spec, model.reg_box, section)
    if family == "constant":
        return regular_constant(params[0] if params else box.lower[0], box)
    if family == "threshold":
        if len(params) != 3:
            raise ConfigError("threshold needs 3 params (c, low, high)", field=f"{section}.params")
        return regular_threshold(*params, box=box)
    if family == "affine":
        if len(params) < 2:
            raise ConfigError("affine needs params (a0, a_x[, a_u])", field=f"{section}.params")
        return regular_affine(params[0], params[1], params[2] if len(params) > 2 else 0.0, box)
    raise ConfigError(f"unknown regular control family {family!r}", field=f"{section}.family")


def build_kernel(spec: dict, n: int, base: Path):
    section = "kernel"
    check_keys(spec, ("source", "path", "graphon_id", "graphon_params"), section)
    source = spec.get("source", "graphon")
    if source == "matrix":
        path = Path(require(spec, "path", section))
        if not path.is_absolute():
            path = base / path
        try:
            k = load_step_kernel(path)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load kernel matrix: {exc}", field="kernel.path") from None
        if k.n != n:
            raise ConfigError(f"kernel matrix has n={k.n} but sim.n={n}", field="kernel.path")
        return k
    if source == "graphon":
        params = spec.get("graphon_params", [])
        if not isinstance(params, list):
            raise ConfigError("graphon_params must be a list", field="kernel.graphon_params")
        g = ex.graphon_from_id(spec.get("graphon_id", "constant"), tuple(params))
        return sample_from_graphon(g, n)
    raise ConfigError(f"kernel.source must be 'matrix' or 'graphon', got {source!r}", field="kernel.source")


def resolve_simulation(raw: dict, base: Path, seed=None, workers=None):
    """Validate a simulate config; returns (model, policy, kernel, SimConfig, InitSpec, resolved dict)."""
    check_keys(raw, SIM_SECTIONS, "root")
    for sec in SIM_SECTIONS:
        if sec in raw and not isinstance(raw[sec], dict):
            raise ConfigError(f"[{sec}] must be a table", field=sec)
    sim_t = dict(require(raw, "sim", "root"))
    check_keys(sim_t, ("n", "T", "dt", "reps", "store_stride", "seed"), "sim")
    n = require(sim_t, "n", "sim")
    if isinstance(n, bool) or not isinstance(n, int):
        raise ConfigError("n must be an integer", field="sim.n")
    model_t = dict(raw.get("model", {"id": "brownian"}))
    model_id = model_t.pop("id", None)
    if model_id is None:
        model_id = "custom" if "ref" in model_t else require(model_t, "id", "model")
    model = model_by_id(model_id, **model_t)
    ctrl_t = dict(raw.get("controls", {}))
    check_keys(ctrl_t, ("gamma", "alpha", "relaxed"), "controls")
    relaxed = ctrl_t.get("relaxed", False)
    if not isinstance(relaxed, bool):
        raise ConfigError("relaxed must be a boolean", field="controls.relaxed")
    gamma = build_gamma(dict(ctrl_t.get("gamma", {"family": "constant", "params": [0.0]})), model, relaxed)
    alpha = build_alpha(ctrl_t.get("alpha"), model)
    kernel = build_kernel(dict(raw.get("kernel", {})), n, base)
    policy = RelaxedPairControl(n, gamma, alpha) if relaxed else lift_to_nplayer(gamma, alpha, n)
    init_t = dict(raw.get("init", {}))
    check_keys(init_t, ("family", "params"), "init")
    init = InitSpec(init_t.get("family", "dirac"), _params(init_t, "init") or (0.0,))
    try:
        cfg = SimConfig(
            n=n,
            T=float(sim_t.get("T", 1.0)),
            dt=float(sim_t.get("dt", 0.01)),
            reps=int(sim_t.get("reps", 1)),
            seed=int(seed if seed is not None else sim_t.get("seed", 0)),
            store_stride=int(sim_t.get("store_stride", 1)),
            workers=int(workers or default_workers()),
        )
    except ConfigError as exc:
        exc.field = f"sim.{exc.field}" if exc.field else "sim"
        raise
    resolved = {
        "model": {"id": model_id, **model_t},
        "kernel": raw.get("kernel", {}),
        "controls": {k: v for k, v in ctrl_t.items()},
        "sim": {"n": cfg.n, "T": cfg.T, "dt": cfg.dt, "reps": cfg.reps, "store_stride": cfg.store_stride,
                "seed": cfg.seed},
        "init": {"family": init.family, "params": list(init.params)},
    }
    return model, policy, kernel, cfg, init, resolved


def cmd_simulate(args) -> int:
    if not args.config:
        raise ConfigError("simulate needs --config", field="config")
    raw = load_toml(args.config)
    model, policy, kernel, cfg, init, resolved = resolve_simulation(
        raw, Path(args.config).resolve().parent, args.seed, args.workers)
    trajs = simulate(model, policy, kernel, cfg, init)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mean, se, m = mc_summary(trajs.totals())
    write_trajectories_csv(out / "trajectories.csv", trajs)
    write_costs_csv(out / "costs.csv", trajs)
    write_cost_summary_csv(out / "cost_summary.csv", trajs, mean, se)
    with open(out / "config_resolved.json", "w") as fh:
        json.dump(resolved, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"J_mean={_fmt(mean)}")
    print(f"J_stderr={_fmt(se)}")
    print(f"M={m}")
    print(f"out={out}")
    return EXIT_OK


# ------------------------------------------------------------------- cutnorm


def cmd_cutnorm(args) -> int:
    if args.matrix:
        try:
            marks, _ = load_matrix_csv(args.matrix)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read matrix: {exc}", field="matrix") from None
        if marks.shape[2] != 1:
            raise ConfigError("cut norm needs a scalar (dim=1) matrix", field="matrix")
        m = marks[:, :, 0]
    elif args.graphon:
        if not args.n:
            raise ConfigError("--graphon needs --n", field="n")
        m = sample_from_graphon(ex.graphon_from_id(args.graphon, tuple(args.graphon_params)), args.n).scalar()
    else:
        raise ConfigError("cutnorm needs --matrix PATH or --graphon ID --n N", field="matrix")
    size = min(m.shape)
    if args.exact and size > args.cap:
        raise SizeCapExceeded(f"exact cut norm limited to {args.cap} blocks, got {size}")
    if args.exact or (not args.heuristic and size <= args.cap):
        value, method = cut_norm_exact(m, cap=args.cap), "exact"
    else:
        value, method = cut_norm_lower_bound(m, restarts=args.restarts, rng_seed=args.seed or 0), "lower-bound"
    print(f"cutnorm={value:.17g} method={method}")
    return EXIT_OK


# ---------------------------------------------------------------- experiment


def cmd_experiment(args) -> int:
    if args.id not in ex.EXPERIMENTS:
        raise ConfigError(f"unknown experiment {args.id!r}; known: {sorted(ex.EXPERIMENTS)}", field="id")
    cls, runner = ex.EXPERIMENTS[args.id]
    table = load_toml(args.config) if args.config else {}
    if args.id in table and isinstance(table[args.id], dict) and len(table) == 1:
        table = table[args.id]
    names = {f for f in cls.__dataclass_fields__}
    overrides = {"seed": args.seed}
    if "workers" in names:
        overrides["workers"] = args.workers or default_workers()
    cfg = dataclass_from_table(cls, table, args.id, **overrides)
    report = runner(cfg)
    d = report.write(args.out)
    for line in report.lines():
        print(line)
    print(f"report={d / 'report.csv'}")
    return VERDICT_EXIT[report.verdict]


# ---------------------------------------------------------------------- main


def _global_flags(p: argparse.ArgumentParser, top: bool) -> None:
    # subcommands repeat the flags without defaults so either position works
    d = (lambda v: {"default": v}) if top else (lambda v: {"default": argparse.SUPPRESS})
    p.add_argument("--config", metavar="PATH", help="TOML config file", **d(None))
    p.add_argument("--out", metavar="DIR", help="output directory (default: out)", **d("out"))
    p.add_argument("--seed", metavar="U64", type=int, help="override the config seed", **d(None))
    p.add_argument("--workers", metavar="K", type=int,
                   help="worker processes (default: $GMFC_THREADS or available cores)", **d(None))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gmfc", description="Finite-population mean-field control simulator.")
    _global_flags(parser, top=True)
    sub = parser.add_subparsers(dest="command", metavar="{simulate,cutnorm,experiment}")
    sub.required = True

    p = sub.add_parser("simulate", help="simulate the n-agent system from a config")
    _global_flags(p, top=False)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("cutnorm", help="cut norm of a kernel matrix or sampled graphon")
    _global_flags(p, top=False)
    p.add_argument("--matrix", metavar="PATH", help="kernel CSV file")
    p.add_argument("--graphon", metavar="ID", help="catalog graphon id")
    p.add_argument("--graphon-params", metavar="X", type=float, nargs="*", default=[], help="graphon parameters")
    p.add_argument("--n", type=int, help="blocks when sampling a graphon")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--exact", action="store_true", help="force exact enumeration (exit 4 above the cap)")
    mode.add_argument("--heuristic", action="store_true", help="force the alternating lower bound")
    p.add_argument("--restarts", type=int, default=32, help="random restarts for the lower bound")
    p.add_argument("--cap", type=int, default=EXACT_CAP, help="largest size for exact enumeration")
    p.set_defaults(func=cmd_cutnorm)

    p = sub.add_parser("experiment", help="run a pre-registered experiment")
    _global_flags(p, top=False)
    p.add_argument("id", help=f"one of {', '.join(ex.EXPERIMENTS)}")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        field = f" (field: {exc.field})" if exc.field else ""
        print(f"error: {exc}{field}", file=sys.stderr)
        return EXIT_CONFIG
    except SizeCapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (GmfcError, ValueError, FloatingPointError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
