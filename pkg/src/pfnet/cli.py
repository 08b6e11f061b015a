"""Command line harness.

    pfn run <experiment> [--config FILE] [--seed N] [--iters N]
            [--tol X] [--out DIR] [experiment flags...]
    pfn validate <experiment|custom> [--config FILE]

Named experiments reproduce the library's reference scenarios;
`custom` runs a user-declared network from a JSON config.  A run
writes `trace.csv`, `summary.json`, PPM heatmaps of every variable
under `img/`, and matplotlib figures under `fig/`.  The exit status is
0 only when the experiment's criterion holds.

The env var PFN_THREADS caps the BLAS thread count; results are
independent of it.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

if "PFN_THREADS" in os.environ:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ["PFN_THREADS"])

import numpy as np

from . import engine, experiments, io_viz
from .builders import state_basis
from .experiments import EXPERIMENTS, ExperimentResult
from .graph import HIDDEN, OBSERVED, FactorNetwork, NetworkError
from .kernels import NormalizationPolicy, SparsenessSchedule

# Config keys accepted per experiment, beyond the common ones.
COMMON_KEYS = {"experiment", "seed", "max_iters", "tol", "out", "t"}
EXPERIMENT_KEYS = {
    "chain-deterministic": {"variant", "noise", "n_seeds"},
    "chain-nondeterministic": {"variant", "theta"},
    "learn-transitions": {
        "columns",
        "theta",
        "subcol_norm",
        "mixture",
        "noise",
    },
    "regex-hier": set(),
    "target-tracker": {"variant", "noise"},
    "sparse-hier": {
        "source",
        "wav_path",
        "dims",
        "p",
        "q",
        "window_len",
        "hop",
    },
    "custom": {"network", "observations", "observe", "theta", "averaging"},
}


def parse_observation(spec: str):
    """Parse `var:slice=StateName` or `var:slice:index=value`."""
    lhs, _, rhs = spec.partition("=")
    if not rhs:
        raise NetworkError(f"bad observation {spec!r}: missing '='")
    parts = lhs.split(":")
    if len(parts) == 2:
        var, t = parts
        if not rhs.startswith("S"):
            raise NetworkError(f"bad observation {spec!r}: expected a state name like S2")
        return var, int(t), None, int(rhs[1:])
    if len(parts) == 3:
        var, t, idx = parts
        return var, int(t), int(idx), float(rhs)
    raise NetworkError(f"bad observation {spec!r}")


def apply_observations(net: FactorNetwork, specs) -> None:
    for spec in specs:
        var_id, t, idx, value = parse_observation(spec)
        if var_id not in net.variables:
            raise NetworkError(f"unknown variable {var_id!r} in observation")
        var = net.variables[var_id]
        if not 1 <= t <= var.n_cols:
            raise NetworkError(f"slice {t} out of range for {var_id!r}")
        if idx is None:
            var.value[:, t - 1] = state_basis(int(value), var.dim)
            var.observed_mask[:, t - 1] = True
        else:
            if not 1 <= idx <= var.dim:
                raise NetworkError(f"index {idx} out of range for {var_id!r}")
            var.value[idx - 1, t - 1] = value
            var.observed_mask[idx - 1, t - 1] = True


def _normalization_from(cfg: dict) -> NormalizationPolicy:
    kind = cfg.get("normalization", "none")
    aliases = {
        "none": "none",
        "unit": "unit",
        "unit-column-sum": "unit",
        "subcolumns": "subcolumns",
        "equal-subcolumn-sums": "subcolumns",
    }
    if kind not in aliases:
        raise NetworkError(f"unknown normalization {kind!r}")
    partition = cfg.get("partition")
    return NormalizationPolicy(
        aliases[kind], tuple(partition) if partition else None
    )


def build_custom_network(config: dict) -> FactorNetwork:
    spec = config.get("network")
    if not spec:
        raise NetworkError("custom experiment needs a 'network' section")
    net = FactorNetwork()
    for v in spec.get("variables", []):
        net.add_variable(
            v["id"],
            int(v["dim"]),
            v.get("role", HIDDEN),
            int(v.get("slices", 1)),
        )
    for b in spec.get("blocks", []):
        if "csv" in b:
            matrix = io_viz.read_matrix_csv(b["csv"])
        else:
            matrix = np.asarray(b["rows"], dtype=float)
        net.add_block(
            b["id"],
            matrix,
            learnable=bool(b.get("learnable", False)),
            tie_group=b.get("tie_group"),
            normalization=_normalization_from(b),
            update_period=int(b.get("update_period", 1)),
        )
    for i, e in enumerate(spec.get("equations", [])):
        net.add_equation(
            [tuple(s) if isinstance(s, list) else s for s in e["child"]],
            [tuple(s) if isinstance(s, list) else s for s in e["parents"]],
            e["blocks"],
            n_cols=e.get("n_cols"),
            col_start=int(e.get("col_start", 0)),
            eq_id=e.get("id", f"E{i + 1}"),
        )
    net.assign_levels()
    for var_id, path in config.get("observations", {}).items():
        m = io_viz.read_matrix_csv(path)
        var = net.variables[var_id]
        if m.shape != var.value.shape:
            raise NetworkError(
                f"observation for {var_id!r} has shape {m.shape}, "
                f"expected {var.value.shape}"
            )
        var.value = m
        var.observed_mask[:] = True
        var.role = OBSERVED
    apply_observations(net, config.get("observe", []))
    return net


def run_custom(config: dict) -> ExperimentResult:
    net = build_custom_network(config)
    cfg = engine.InferenceConfig(
        max_iters=int(config.get("max_iters", 500)),
        rmse_tol=float(config.get("tol", 1e-4)),
        seed=int(config.get("seed", 0)),
        sparseness=SparsenessSchedule.constant(float(config.get("theta", 0.0))),
        averaging=config.get("averaging", "scheme1"),
    )
    trace = engine.run(net, cfg)
    return ExperimentResult(
        "custom",
        trace.converged,
        {
            "converged": trace.converged,
            "iterations": trace.iterations,
            "final_rmse": float(trace.final_rmse().max()),
        },
        net,
        trace,
    )


def load_config(args) -> dict:
    config = {}
    if args.config:
        with open(args.config) as fh:
            config = json.load(fh)
    name = config.get("experiment", args.experiment)
    if args.experiment and config.get("experiment") not in (None, args.experiment):
        raise NetworkError(
            f"config is for {config['experiment']!r}, not {args.experiment!r}"
        )
    if name not in EXPERIMENT_KEYS:
        raise NetworkError(
            f"unknown experiment {name!r}; choose from {sorted(EXPERIMENT_KEYS)}"
        )
    allowed = COMMON_KEYS | EXPERIMENT_KEYS[name]
    unknown = set(config) - allowed
    if unknown:
        raise NetworkError(f"unknown config keys: {sorted(unknown)}")
    config["experiment"] = name
    # flag overrides
    for key, value in (
        ("seed", args.seed),
        ("max_iters", args.iters),
        ("tol", args.tol),
        ("t", getattr(args, "T", None)),
        ("variant", getattr(args, "variant", None)),
        ("theta", getattr(args, "theta", None)),
        ("columns", getattr(args, "columns", None)),
        ("wav_path", getattr(args, "wav", None)),
        ("source", getattr(args, "source", None)),
    ):
        if value is not None:
            config[key] = value
    if getattr(args, "noise", None) is not None:
        lo, _, hi = args.noise.partition(",")
        config["noise"] = (float(lo), float(hi))
    if getattr(args, "observe", None):
        config.setdefault("observe", []).extend(args.observe.split(","))
    return config


def write_artifacts(result: ExperimentResult, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {
        "experiment": result.name,
        "passed": bool(result.passed),
        **result.summary,
    }
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if result.trace is not None:
        result.trace.to_csv(out_dir / "trace.csv")
    if result.net is not None:
        img = out_dir / "img"
        fig = out_dir / "fig"
        img.mkdir(exist_ok=True)
        fig.mkdir(exist_ok=True)
        for var_id, var in result.net.variables.items():
            io_viz.write_heatmap(var.value, img / f"{var_id}.ppm", pixel_size=4)
            io_viz.save_heatmap_png(var.value, fig / f"{var_id}.png", title=var_id)
        for block_id, block in result.net.blocks.items():
            io_viz.write_heatmap(block.matrix, img / f"{block_id}.ppm", pixel_size=4)
        if result.trace is not None:
            io_viz.save_trace_png(
                result.trace.per_equation_rmse,
                result.trace.equation_ids,
                fig / "trace.png",
            )


def cmd_run(args) -> int:
    config = load_config(args)
    name = config.pop("experiment")
    if name == "custom":
        result = run_custom(config)
    else:
        func = EXPERIMENTS[name]
        result = func(**config)
    write_artifacts(result, Path(args.out))
    status = "PASS" if result.passed else "FAIL"
    print(f"{result.name}: {status}")
    for key, value in result.summary.items():
        print(f"  {key}: {value}")
    return 0 if result.passed else 1


def _network_for_validation(name: str, config: dict) -> FactorNetwork:
    from .builders import build_target_tracker, build_two_level_network
    from .builders import build_chain_network, build_sparse_hierarchy, HierarchySpec
    from .builders import transition_basis_matrix, coupling_matrix

    t = int(config.get("t", 10))
    if name == "custom":
        return build_custom_network(config)
    if name in ("chain-deterministic", "chain-nondeterministic"):
        diag = (
            experiments.DETERMINISTIC_CYCLE
            if name == "chain-deterministic"
            else experiments.NONDETERMINISTIC_DIAGRAM
        )
        return build_chain_network(transition_basis_matrix(diag), t)
    if name == "learn-transitions":
        cols = int(config.get("columns", 6))
        return build_chain_network(np.ones((8, cols)), int(config.get("t", 1000)))
    if name == "regex-hier":
        return build_two_level_network(
            transition_basis_matrix(experiments.REGEX_LOWER),
            transition_basis_matrix(experiments.REGEX_UPPER),
            coupling_matrix(
                experiments.REGEX_COUPLING,
                len(experiments.REGEX_UPPER.transitions),
                len(experiments.REGEX_LOWER.transitions),
            ),
            t,
        )
    if name == "target-tracker":
        return build_target_tracker(5, 15, int(config.get("t", 26)))
    if name == "sparse-hier":
        dims = tuple(config.get("dims", (50, 40, 40)))
        spec = HierarchySpec(
            (60,) + dims,
            (int(config.get("p", 4)),) * len(dims),
            tuple(config.get("q", (1, 4, 16))),
            int(config.get("t", 200)),
        )
        return build_sparse_hierarchy(spec)
    raise NetworkError(f"unknown experiment {name!r}")


def cmd_validate(args) -> int:
    config = load_config(args)
    name = config.pop("experiment")
    try:
        net = _network_for_validation(name, config)
    except NetworkError as exc:
        print(f"invalid: {exc}")
        return 1
    print(f"{name}: valid network with {net.n_levels} levels")
    by_level: dict[int, list[str]] = {}
    for var in net.variables.values():
        by_level.setdefault(var.level, []).append(var.id)
    for level in sorted(by_level):
        names = ", ".join(
            f"{v}({net.variables[v].dim}x{net.variables[v].n_cols})"
            for v in by_level[level]
        )
        print(f"  level {level}: {names}")
    for eq in net.equations:
        shape = net.stacked_block(eq).shape
        print(f"  equation {eq.id}: W {shape[0]}x{shape[1]}, {eq.n_cols} columns")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="pfn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in ("run", "validate"):
        p = sub.add_parser(cmd)
        p.add_argument("experiment", nargs="?", default=None)
        p.add_argument("--config", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--iters", type=int, default=None)
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--out", default="out")
        p.add_argument("--T", type=int, default=None)
        p.add_argument("--variant", default=None)
        p.add_argument("--theta", type=float, default=None)
        p.add_argument("--columns", type=int, default=None)
        p.add_argument("--noise", default=None, help="lo,hi uniform noise bounds")
        p.add_argument("--observe", default=None, help="comma-separated var:slice=Sn")
        p.add_argument("--wav", default=None)
        p.add_argument("--source", default=None)
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        return cmd_validate(args)
    except (NetworkError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
