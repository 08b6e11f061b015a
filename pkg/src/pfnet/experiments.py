"""Named experiment scenarios.

Each experiment builds a network, generates or loads observations, runs
the engine, and reports a pass/fail criterion with supporting numbers.
The scenarios cover: inference on deterministic and nondeterministic
chain models (full, partial, noisy, and superposed observations),
transition basis learning from elementary sequences and mixtures, the
two-level regex-style hierarchical model, the multi-target tracker, and
sparse hierarchy learning on synthetic or WAV spectrograms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import datagen, engine, io_viz
from .builders import (
    CouplingTable,
    HierarchySpec,
    TransitionDiagram,
    build_chain_network,
    build_sparse_hierarchy,
    build_two_level_network,
    coupling_matrix,
    state_basis,
    transition_basis_matrix,
)
from .datagen import TargetEvent, target_scene_assignment
from .builders import build_target_tracker
from .engine import InferenceConfig, ObservationOverride, RunTrace
from .graph import HIDDEN, OBSERVED, FactorNetwork, NetworkError
from .kernels import NormalizationPolicy, SparsenessSchedule

# A four-state cycle: S1 -> S2 -> S3 -> S4 -> S1.
DETERMINISTIC_CYCLE = TransitionDiagram(4, ((1, 2), (2, 3), (3, 4), (4, 1)))

# The same cycle plus a self-loop on S3 and a shortcut S2 -> S4.
NONDETERMINISTIC_DIAGRAM = TransitionDiagram(
    4, ((1, 2), (2, 3), (3, 4), (4, 1), (3, 3), (2, 4))
)

# Two-level model of the pattern a+b(de)*c(de)+ (lower level: a/d=1,
# b/e=2, c=3 style states; upper level tracks the phrase structure).
REGEX_LOWER = TransitionDiagram(3, ((1, 2), (2, 3), (2, 1), (3, 1), (3, 3)))
REGEX_UPPER = TransitionDiagram(
    6,
    (
        (1, 1),
        (1, 2),
        (2, 3),
        (2, 4),
        (3, 4),
        (4, 5),
        (5, 6),
        (6, 1),
        (5, 5),
        (3, 3),
        (6, 6),
    ),
)
REGEX_COUPLING = CouplingTable(
    (
        (3, 4),
        (10, 1),
        (10, 3),
        (5, 2),
        (6, 4),
        (9, 1),
        (9, 3),
        (7, 2),
        (11, 5),
        (8, 5),
        (1, 5),
        (2, 5),
        (4, 5),
    )
)

# Unique solutions of the partially observed scenarios below; verified
# by exhaustive path enumeration in the test suite.
DET_PATH_FROM_S1 = (1, 2, 3, 4, 1, 2, 3, 4, 1, 2)
DET_PATH_X4_S1 = (2, 3, 4, 1, 2, 3, 4, 1, 2, 3)
NONDET_OBSERVED_SLICES = {2: 2, 4: 3, 5: 4, 10: 2}
NONDET_UNIQUE_PATH = (1, 2, 3, 3, 4, 1, 2, 4, 1, 2)
REGEX_OBSERVED_SLICES = {2: 2, 7: 4}
REGEX_UPPER_PATH_1_9 = (1, 2, 3, 3, 3, 3, 4, 5, 5)
REGEX_LOWER_PATH_1_9 = (3, 3, 1, 2, 1, 2, 3, 1, 2)

# Tracker scene: two type-A targets and one type-B target with
# magnitudes 1.0 / 0.8 / 0.6, overlapping in slices 4..7.  Every event
# is born after the first slice and gone before the last one, so its
# appear and vanish transitions are part of the scene and pin down the
# state cycle; this is what makes the hidden variables uniquely
# recoverable from the observations.
TRACKER_SCENE = (
    TargetEvent("A", onset=2, magnitude=1.0, position_path=(3,) * 5 + (4,) * 4),
    TargetEvent("B", onset=4, magnitude=0.8, position_path=(10,) * 4),
    TargetEvent("A", onset=13, magnitude=0.6, position_path=(8,) * 5 + (7,) * 4 + (6,) * 4),
)


@dataclass
class ExperimentResult:
    name: str
    passed: bool
    summary: dict
    net: FactorNetwork | None = None
    trace: RunTrace | None = None
    extras: dict = field(default_factory=dict)


def path_matrix(path, m: int) -> np.ndarray:
    return np.column_stack([state_basis(s, m) for s in path])


def argmax_path(x: np.ndarray) -> tuple[int, ...]:
    return tuple(int(i) + 1 for i in np.argmax(x, axis=0))


def normalize_columns(w: np.ndarray) -> np.ndarray:
    sums = w.sum(axis=0)
    safe = np.where(sums > 0.0, sums, 1.0)
    return w / safe


def match_columns(learned: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Best assignment of true columns to learned columns.

    Both sides are normalized to unit column sum before comparison
    (learning only determines columns up to scale).  Returns the L1
    distance for each true column under the optimal matching.
    """
    a = normalize_columns(np.asarray(learned, dtype=float))
    b = normalize_columns(np.asarray(truth, dtype=float))
    cost = np.zeros((b.shape[1], a.shape[1]))
    for i in range(b.shape[1]):
        cost[i] = np.abs(a - b[:, i : i + 1]).sum(axis=0)
    rows, cols = linear_sum_assignment(cost)
    return cost[rows, cols]


def _observe_slices(net: FactorNetwork, var_id: str, obs: dict[int, int]) -> None:
    """Mark 1-based slices of a state variable observed with basis values."""
    var = net.variables[var_id]
    for t, s in obs.items():
        var.value[:, t - 1] = state_basis(s, var.dim)
        var.observed_mask[:, t - 1] = True


# -- chain experiments --------------------------------------------------------


def chain_deterministic(
    variant: str = "full",
    t: int | None = None,
    seed: int = 0,
    max_iters: int = 500,
    tol: float = 1e-4,
    noise: tuple[float, float] = (0.0, 0.1),
    n_seeds: int = 10,
    **_,
) -> ExperimentResult:
    """Inference on the deterministic cycle (no learning)."""
    if t is None:
        # the noisy floor is reported on a longer sequence so that the
        # average estimates the asymptotic misfit rather than
        # small-sample fluctuations
        t = 100 if variant == "noisy" else 10
    diagram = DETERMINISTIC_CYCLE
    w = transition_basis_matrix(diagram)
    base_path = [((DET_PATH_FROM_S1[0] - 1 + k) % 4) + 1 for k in range(t)]
    x_true = path_matrix(base_path, 4)
    h_true = datagen.encode_path(
        diagram,
        [diagram.transitions.index((a, b)) for a, b in zip(base_path, base_path[1:])],
    )

    if variant == "noisy":
        finals = []
        for s in range(n_seeds):
            net = build_chain_network(w, t)
            net.variables["X"].value = datagen.add_uniform_noise(
                x_true, noise[0], noise[1], seed=1000 + s
            )
            trace = engine.run(net, InferenceConfig(max_iters=max_iters, rmse_tol=tol, seed=s))
            finals.append(float(trace.final_rmse().max()))
        mean_rmse = float(np.mean(finals))
        return ExperimentResult(
            "chain-deterministic/noisy",
            0.02 <= mean_rmse <= 0.05,
            {"mean_final_rmse": mean_rmse, "per_seed": finals},
        )

    if variant == "superposed":
        path_b = [((2 - 1 + k) % 4) + 1 for k in range(t)]
        x_b = path_matrix(path_b, 4)
        h_b = datagen.encode_path(
            diagram,
            [diagram.transitions.index((a, b)) for a, b in zip(path_b, path_b[1:])],
        )
        net = build_chain_network(w, t)
        net.variables["X"].value = 0.5 * x_true + 1.0 * x_b
        trace = engine.run(net, InferenceConfig(max_iters=max_iters, rmse_tol=tol, seed=seed))
        # evaluate the cost at the known superposed assignment
        oracle = build_chain_network(w, t)
        oracle.variables["X"].value = 0.5 * x_true + 1.0 * x_b
        oracle.variables["H"].value = 0.5 * h_true + 1.0 * h_b
        oracle.make_consistent()
        oracle_cost = engine.total_cost(oracle)
        passed = trace.converged and oracle_cost < 1e-8
        return ExperimentResult(
            "chain-deterministic/superposed",
            passed,
            {
                "converged": trace.converged,
                "iterations": trace.iterations,
                "final_rmse": float(trace.final_rmse().max()),
                "oracle_total_cost": oracle_cost,
            },
            net,
            trace,
        )

    if variant in ("partial-x1", "partial-x4"):
        slice_1based = 1 if variant == "partial-x1" else 4
        oracle_path = DET_PATH_FROM_S1 if variant == "partial-x1" else DET_PATH_X4_S1
        net = build_chain_network(w, t, observed=False)
        _observe_slices(net, "X", {slice_1based: 1})
        trace = engine.run(net, InferenceConfig(max_iters=max_iters, rmse_tol=tol, seed=seed))
        inferred = argmax_path(net.variables["X"].value)
        # the unique valid path is the criterion; the residual keeps
        # shrinking long after the path has settled
        passed = inferred == tuple(oracle_path[:t])
        return ExperimentResult(
            f"chain-deterministic/{variant}",
            passed,
            {
                "converged": trace.converged,
                "iterations": trace.iterations,
                "final_rmse": float(trace.final_rmse().max()),
                "inferred_path": list(inferred),
                "expected_path": list(oracle_path[:t]),
            },
            net,
            trace,
        )

    # fully observed
    net = build_chain_network(w, t)
    net.variables["X"].value = x_true
    trace = engine.run(net, InferenceConfig(max_iters=max_iters, rmse_tol=tol, seed=seed))
    h = net.variables["H"].value
    h_err = float(np.max(np.abs(h - h_true)))
    passed = trace.converged and h_err < 1e-3
    return ExperimentResult(
        "chain-deterministic/full",
        passed,
        {
            "converged": trace.converged,
            "iterations": trace.iterations,
            "final_rmse": float(trace.final_rmse().max()),
            "max_H_error": h_err,
        },
        net,
        trace,
        extras={"h_true": h_true},
    )


def chain_nondeterministic(
    variant: str = "partial",
    t: int = 10,
    seed: int = 0,
    max_iters: int = 2000,
    tol: float = 1e-4,
    theta: float = 0.1,
    **_,
) -> ExperimentResult:
    """Inference on the nondeterministic diagram.

    'partial' observes slices 2, 4, 5, and 10, which pins a unique
    path.  'sparse' drops the slice-10 observation and uses sparseness
    to pick one solution per hidden slice.  'sample' observes nothing
    and uses sparseness to sample a valid path.
    """
    diagram = NONDETERMINISTIC_DIAGRAM
    w = transition_basis_matrix(diagram)
    net = build_chain_network(w, t, observed=False)

    if variant == "partial":
        _observe_slices(net, "X", NONDET_OBSERVED_SLICES)
        trace = engine.run(net, InferenceConfig(max_iters=max_iters, rmse_tol=tol, seed=seed))
        x = net.variables["X"].value
        inferred = argmax_path(x)
        col_sums = x.sum(axis=0)
        off_mass = float(
            np.max((col_sums - x.max(axis=0)) / np.where(col_sums > 0, col_sums, 1.0))
        )
        passed = (
            trace.converged and inferred == NONDET_UNIQUE_PATH and off_mass < 1e-3
        )
        return ExperimentResult(
            "chain-nondeterministic/partial",
            passed,
            {
                "converged": trace.converged,
                "iterations": trace.iterations,
                "inferred_path": list(inferred),
                "expected_path": list(NONDET_UNIQUE_PATH),
                "max_off_component_fraction": off_mass,
            },
            net,
            trace,
        )

    if variant == "sparse":
        obs = {k: v for k, v in NONDET_OBSERVED_SLICES.items() if k != 10}
        _observe_slices(net, "X", obs)
        cfg = InferenceConfig(
            max_iters=max_iters,
            rmse_tol=tol,
            seed=seed,
            sparseness=SparsenessSchedule.constant(theta),
        )
        trace = engine.run(net, cfg)
        x = net.variables["X"].value
        col_sums = np.where(x.sum(axis=0) > 0, x.sum(axis=0), 1.0)
        dominance = x.max(axis=0) / col_sums
        hidden_cols = [c for c in range(t) if (c + 1) not in obs]
        min_dom = float(np.min(dominance[hidden_cols]))
        passed = min_dom > 0.9
        return ExperimentResult(
            "chain-nondeterministic/sparse",
            passed,
            {
                "min_hidden_slice_dominance": min_dom,
                "inferred_path": list(argmax_path(x)),
                "iterations": trace.iterations,
            },
            net,
            trace,
        )

    if variant == "sample":
        cfg = InferenceConfig(
            max_iters=max_iters,
            rmse_tol=tol,
            seed=seed,
            sparseness=SparsenessSchedule.constant(theta),
            init_scale=1.0,
        )
        trace = engine.run(net, cfg)
        x = net.variables["X"].value
        path = argmax_path(x)
        valid = all(
            (a, b) in diagram.transitions for a, b in zip(path, path[1:])
        )
        return ExperimentResult(
            "chain-nondeterministic/sample",
            valid,
            {
                "sampled_path": list(path),
                "path_valid": valid,
                "iterations": trace.iterations,
            },
            net,
            trace,
        )

    raise NetworkError(f"unknown variant {variant!r}")


# -- transition learning ------------------------------------------------------


def _transition_shaped(w: np.ndarray, m: int) -> bool:
    """Do all active columns put weight in both state halves?

    A transition basis column stacks a source-state and a destination-
    state vector, so it must carry mass in the top and bottom m rows.
    Solutions violating this (for example a pure source-only column)
    are recognizable failures without knowing the true basis.
    """
    sums = w.sum(axis=0)
    if sums.max() <= 0:
        return False
    active = sums > 0.05 * sums.max()
    halves = np.minimum(w[:m].sum(axis=0), w[m:].sum(axis=0))
    frac = halves / np.maximum(sums, np.finfo(float).tiny)
    return bool(np.all(frac[active] > 0.2))


def learn_transitions(
    columns: int = 6,
    t: int = 1000,
    seed: int = 0,
    max_iters: int | None = None,
    tol: float = 1e-5,
    theta: float = 0.0,
    subcol_norm: bool = False,
    mixture: bool = False,
    noise: tuple[float, float] = (0.0, 0.0),
    attempts: int = 16,
    **_,
) -> ExperimentResult:
    """Learn a transition basis from observed sequences.

    The data comes from the nondeterministic 4-state diagram: one long
    elementary sequence, or a 3-sequence mixture with scales
    0.5/1.0/1.5, optionally with additive uniform noise.  Learning can
    stall in a local minimum or land on an alternative factorization
    whose columns are not transitions, so the run is retried with fresh
    random initializations until the residual is small and every active
    learned column is transition shaped; both checks use only observed
    quantities.  The sparse variant (theta > 0 with subcolumn
    normalization) runs once and counts near-zero learned columns.
    """
    diagram = NONDETERMINISTIC_DIAGRAM
    w_true = transition_basis_matrix(diagram)
    m = diagram.state_count
    if mixture:
        parts = [
            datagen.sample_elementary_sequence(diagram, t, seed=7000 + seed * 3 + i)
            for i in range(3)
        ]
        x = datagen.mix_sequences(list(zip((0.5, 1.0, 1.5), parts)))
    else:
        x = datagen.sample_elementary_sequence(diagram, t, seed=5000 + seed)
    noisy = noise[1] > 0
    if noisy:
        x = datagen.add_uniform_noise(x, noise[0], noise[1], seed=9000 + seed)

    sparse = theta > 0.0 and subcol_norm
    if max_iters is None:
        max_iters = 1000 if sparse else (2000 if mixture else 300)
    if subcol_norm:
        policy = NormalizationPolicy("subcolumns", (m, m))
    else:
        policy = NormalizationPolicy("unit")
    rmse_accept = 0.07 if noisy else 1e-3

    net = trace = None
    used = 0
    for attempt in range(1 if sparse else attempts):
        used = attempt + 1
        net = build_chain_network(
            np.ones((2 * m, columns)), t, learnable=True, normalization=policy
        )
        net.variables["X"].value = x
        cfg = InferenceConfig(
            max_iters=max_iters,
            rmse_tol=tol,
            seed=seed + 1000 * attempt,
            sparseness=SparsenessSchedule.constant(theta),
        )
        trace = engine.run(net, cfg)
        if sparse:
            break
        if float(trace.final_rmse().max()) < rmse_accept:
            want_basis = mixture or columns == len(diagram.transitions)
            if not want_basis or _transition_shaped(net.blocks["W"].matrix, m):
                break

    learned = net.blocks["W"].matrix
    errors = match_columns(learned, w_true)
    col_sums = learned.sum(axis=0)
    final_rmse = float(trace.final_rmse().max())
    if sparse:
        passed = int(np.sum(col_sums < 0.05)) >= 2
    elif not mixture and columns > len(diagram.transitions):
        passed = final_rmse < 1e-3
    else:
        match_tol = 0.15 if noisy else 0.05
        passed = bool(np.max(errors) < match_tol)
        if not noisy:
            passed = passed and final_rmse < 1e-3
    return ExperimentResult(
        "learn-transitions",
        passed,
        {
            "final_rmse": final_rmse,
            "iterations": trace.iterations,
            "attempts": used,
            "column_match_l1": [float(e) for e in errors],
            "learned_column_sums": [float(s) for s in col_sums],
        },
        net,
        trace,
        extras={"learned": learned, "w_true": w_true},
    )


# -- regex hierarchical model -------------------------------------------------


def regex_hier(
    t: int = 10,
    seed: int = 0,
    max_iters: int = 500,
    tol: float = 1e-4,
    **_,
) -> ExperimentResult:
    """Two-level inference with upper slices 2 and 7 observed."""
    w1 = transition_basis_matrix(REGEX_LOWER)
    w2 = transition_basis_matrix(REGEX_UPPER)
    u = coupling_matrix(
        REGEX_COUPLING, len(REGEX_UPPER.transitions), len(REGEX_LOWER.transitions)
    )
    net = build_two_level_network(w1, w2, u, t)
    _observe_slices(net, "X2", REGEX_OBSERVED_SLICES)
    trace = engine.run(net, InferenceConfig(max_iters=max_iters, rmse_tol=tol, seed=seed))
    x1, x2 = net.variables["X1"].value, net.variables["X2"].value
    upper = argmax_path(x2[:, :9])
    lower = argmax_path(x1[:, :9])
    sum_gap = float(abs(x2[:, 9].sum() - x2[:, 8].sum())) if t >= 10 else 0.0
    passed = (
        trace.converged
        and upper == REGEX_UPPER_PATH_1_9
        and lower == REGEX_LOWER_PATH_1_9
        and sum_gap < 1e-3
    )
    return ExperimentResult(
        "regex-hier",
        passed,
        {
            "converged": trace.converged,
            "iterations": trace.iterations,
            "final_rmse": float(trace.final_rmse().max()),
            "upper_path_1_9": list(upper),
            "lower_path_1_9": list(lower),
            "slice10_vs_slice9_sum_gap": sum_gap,
        },
        net,
        trace,
    )


# -- target tracker -----------------------------------------------------------


def _tracker_truth(t: int) -> dict[str, np.ndarray]:
    return target_scene_assignment(list(TRACKER_SCENE), 5, 15, t)


def _run_tracker(
    x1: np.ndarray,
    t: int,
    seed: int,
    max_iters: int,
    tol: float,
    sparseness: SparsenessSchedule | None = None,
    hidden_slices: tuple[int, ...] = (),
) -> tuple[FactorNetwork, RunTrace]:
    net = build_target_tracker(5, 15, t)
    var = net.variables["X1"]
    var.value = x1.copy()
    for s in hidden_slices:
        var.observed_mask[:, s - 1] = False
    cfg = InferenceConfig(
        max_iters=max_iters,
        rmse_tol=tol,
        seed=seed,
        sparseness=sparseness or SparsenessSchedule(),
    )
    return net, engine.run(net, cfg)


def _run_tracker_converged(
    x1: np.ndarray,
    t: int,
    seed: int,
    max_iters: int,
    tol: float,
    hidden_slices: tuple[int, ...] = (),
    attempts: int = 4,
) -> tuple[FactorNetwork, RunTrace, int]:
    """Run until converged, retrying stuck runs with fresh seeds.

    Runs with hidden observation slices occasionally settle on an
    inexact local minimum (residual plateaus around 1e-3); that state is
    observable from the trace, so the run is repeated with a different
    initialization until the tolerance is reached.
    """
    net = trace = None
    for attempt in range(attempts):
        net, trace = _run_tracker(
            x1, t, seed + 1000 * attempt, max_iters, tol, hidden_slices=hidden_slices
        )
        if trace.converged:
            break
    return net, trace, attempt + 1


def target_tracker(
    variant: str = "clean",
    t: int = 26,
    seed: int = 0,
    max_iters: int | None = None,
    tol: float | None = None,
    noise: tuple[float, float] = (0.0, 0.06),
    **_,
) -> ExperimentResult:
    """Multi-target scene inference with only the observations visible.

    In the clean run the residual drops below 1e-3 within the first
    10000 iterations; the remaining budget tightens the inferred
    magnitudes, which approach the generating assignment slowly under
    multiplicative updates.  The comparison variants (predict-one,
    hide-tail) re-run inference with observation slices hidden and
    compare against the fully observed run; both runs are pushed to a
    much deeper tolerance because two runs stopped at a loose tolerance
    differ by their remaining drift, not by their solutions.
    """
    truth = _tracker_truth(t)
    x1 = truth["X1"]

    if variant == "noisy":
        # additive uniform noise; the fit converges but state magnitudes
        # degrade roughly in proportion to the noise floor
        if max_iters is None:
            max_iters = 50000
        x1 = datagen.add_uniform_noise(x1, noise[0], noise[1], seed=seed + 400)
        net, trace = _run_tracker(x1, t, seed, max_iters, tol or 1e-4)
        worst = float(trace.final_rmse().max())
        x4_err = float(np.max(np.abs(net.variables["X4"].value - truth["X4"])))
        return ExperimentResult(
            "target-tracker/noisy",
            worst < 1e-3 and x4_err < 0.5,
            {"final_rmse": worst, "max_X4_error": x4_err, "iterations": trace.iterations},
            net,
            trace,
        )

    if variant == "sparse-schedule":
        # noisy observations with sparseness ramped in over the second
        # half of the run: the noise gets squeezed out of the hidden
        # variables and the argmax structure is recovered, at the price
        # of magnitudes inflated by up to about a factor of two
        if max_iters is None:
            max_iters = 10000
        x1n = datagen.add_uniform_noise(x1, noise[0], noise[1], seed=seed + 400)
        schedule = SparsenessSchedule(
            points=((max_iters // 2, 0.0), (max_iters, 0.05))
        )
        net, trace = _run_tracker(
            x1n, t, seed, max_iters, tol or 1e-6, sparseness=schedule
        )
        argmax_ok = True
        ratios = []
        for v in ("X2", "X3", "X4", "X5"):
            truth_v, inferred = truth[v], net.variables[v].value
            active = truth_v.sum(axis=0) > 0
            argmax_ok = argmax_ok and bool(
                np.all(
                    inferred[:, active].argmax(axis=0)
                    == truth_v[:, active].argmax(axis=0)
                )
            )
            mask = truth_v > 0.1 * truth_v.max()
            ratios.append(inferred[mask] / truth_v[mask])
        ratios = np.concatenate(ratios)
        passed = argmax_ok and 0.5 < float(ratios.min()) and float(ratios.max()) < 2.5
        return ExperimentResult(
            "target-tracker/sparse-schedule",
            passed,
            {
                "final_rmse": float(trace.final_rmse().max()),
                "argmax_match": argmax_ok,
                "magnitude_ratio_range": [float(ratios.min()), float(ratios.max())],
                "iterations": trace.iterations,
            },
            net,
            trace,
        )

    if variant in ("predict-one", "hide-tail"):
        # the per-run error against the common fixed point decays
        # roughly like 1/iterations and tracks the residual at a stable
        # ratio (~70x), so the entrywise comparison needs a residual
        # near 5e-6, reached after roughly a million iterations; the
        # column-sum comparison is insensitive at that scale and runs
        # at an ordinary tolerance
        if variant == "predict-one":
            max_iters = max_iters or 1800000
            tol = tol or 5e-6
        else:
            max_iters = max_iters or 50000
            tol = tol or 2e-4
        hidden = (25,) if variant == "predict-one" else (22, 23, 24, 25, 26)
        base_net, base_trace, base_tries = _run_tracker_converged(
            x1, t, seed, max_iters, tol
        )
        net, trace, tries = _run_tracker_converged(
            x1, t, seed, max_iters, tol, hidden_slices=hidden
        )
        if variant == "predict-one":
            diffs = [
                float(np.max(np.abs(net.variables[v].value - base_net.variables[v].value)))
                for v in ("X1", "X2", "X3", "X4", "X5")
            ]
            passed = max(diffs) < 1e-3
            return ExperimentResult(
                "target-tracker/predict-one",
                passed,
                {
                    "max_difference_vs_observed_run": max(diffs),
                    "per_variable": diffs,
                    "iterations": trace.iterations,
                    "attempts": [base_tries, tries],
                },
                net,
                trace,
            )
        gaps = []
        for v in ("X2", "X3", "X4", "X5"):
            a = net.variables[v].value[:, 21:26].sum(axis=0)
            b = base_net.variables[v].value[:, 21:26].sum(axis=0)
            gaps.append(float(np.max(np.abs(a - b))))
        passed = max(gaps) < 1e-3
        return ExperimentResult(
            "target-tracker/hide-tail",
            passed,
            {
                "max_column_sum_gap": max(gaps),
                "per_variable_gaps": gaps,
                "iterations": trace.iterations,
                "attempts": [base_tries, tries],
            },
            net,
            trace,
            extras={"base_net": base_net},
        )

    # clean scene
    net, trace = _run_tracker(x1, t, seed, max_iters or 50000, tol or 1e-4)
    checkpoint = min(10000, trace.iterations) - 1
    rmse_10k = float(trace.per_equation_rmse[checkpoint].max())
    errs = {}
    argmax_ok = True
    for v in ("X2", "X3", "X4", "X5"):
        truth_v = truth[v]
        inferred = net.variables[v].value
        errs[v] = float(np.max(np.abs(inferred - truth_v))) / float(truth_v.max())
        active = truth_v.sum(axis=0) > 0
        argmax_ok = argmax_ok and bool(
            np.all(inferred[:, active].argmax(axis=0) == truth_v[:, active].argmax(axis=0))
        )
    passed = rmse_10k < 1e-3 and argmax_ok and max(errs.values()) < 0.02
    return ExperimentResult(
        "target-tracker/clean",
        passed,
        {
            "final_rmse": float(trace.final_rmse().max()),
            "rmse_at_10000": rmse_10k,
            "iterations": trace.iterations,
            "argmax_match": argmax_ok,
            "relative_errors": errs,
        },
        net,
        trace,
        extras={"truth": truth},
    )


# -- sparse hierarchy ---------------------------------------------------------


def _synth_hierarchy_data(
    spec: HierarchySpec, seed: int, n_events: int = 8
) -> tuple[np.ndarray, dict]:
    """Down-propagate event-sparse top activations through random
    unit-column blocks to get a synthetic observation matrix.

    The top level holds a handful of isolated events, like note onsets
    in audio, so the observation has quiet spans and each ascent of the
    hierarchy is genuinely sparser than the level below it.
    """
    rng = np.random.default_rng(seed)
    levels = len(spec.dims)
    blocks = {}
    for i in range(1, levels):
        p = spec.children[i - 1]
        for k in range(p):
            w = rng.random((spec.dims[i - 1], spec.dims[i])) ** 3
            blocks[f"W{i}_{k}"] = normalize_columns(w)
    top = np.zeros((spec.dims[-1], spec.t))
    span = spec.children[-1] * spec.separations[-1]
    onsets = rng.choice(max(spec.t - span, 1), size=n_events, replace=False)
    for c in onsets:
        top[rng.integers(spec.dims[-1]), c] = rng.uniform(0.5, 1.5)
    values = {f"X{levels}": top}
    for i in range(levels - 1, 0, -1):
        p, q = spec.children[i - 1], spec.separations[i - 1]
        upper = values[f"X{i + 1}"]
        x = np.zeros((spec.dims[i - 1], spec.t))
        for k in range(p):
            shifted = np.zeros_like(upper)
            if k * q < spec.t:
                shifted[:, k * q :] = upper[:, : spec.t - k * q]
            x += blocks[f"W{i}_{k}"] @ shifted
        values[f"X{i}"] = x
    scale = values["X1"].max()
    if scale > 0:
        for v in values:
            values[v] = values[v] / scale
    return values["X1"], {"values": values, "blocks": blocks}


def active_fraction(x: np.ndarray, rel_threshold: float = 1e-3) -> float:
    m = float(np.max(x))
    if m <= 0:
        return 0.0
    return float(np.mean(x > rel_threshold * m))


def sparse_hier(
    source: str = "synthetic",
    wav_path: str | None = None,
    dims: tuple[int, ...] = (50, 40, 40),
    p: int = 4,
    q: tuple[int, ...] = (1, 4, 16),
    t: int = 200,
    seed: int = 0,
    max_iters: int = 3000,
    tol: float = 1e-5,
    window_len: int = 1024,
    hop: int = 256,
    **_,
) -> ExperimentResult:
    """Joint learning and inference of a sparse hierarchy.

    Synthetic mode generates the observation by down-propagation from
    sparse top-level activations; WAV mode decomposes a magnitude
    spectrogram of user-supplied audio.
    """
    if source == "wav":
        if not wav_path:
            raise NetworkError("wav source needs wav_path")
        samples, _rate = io_viz.read_wav(wav_path)
        x1 = io_viz.stft_magnitude(samples, window_len, hop)
        x1 = x1 / max(float(x1.max()), 1e-12)
        t = x1.shape[1]
        obs_dim = x1.shape[0]
        ground = None
    else:
        obs_dim = 60
        spec_truth = HierarchySpec((obs_dim,) + tuple(dims), (p,) * len(dims), tuple(q), t)
        x1, ground = _synth_hierarchy_data(spec_truth, seed=seed + 123)

    spec = HierarchySpec((obs_dim,) + tuple(dims), (p,) * len(dims), tuple(q), t)
    net = build_sparse_hierarchy(spec)
    # learn lower levels more often than upper ones
    for i in range(1, len(spec.dims)):
        for k in range(spec.children[i - 1]):
            net.blocks[f"W{i}_{k}"].update_period = 2 ** (i - 1)
    net.variables["X1"].value = x1.copy()
    cfg = InferenceConfig(max_iters=max_iters, rmse_tol=tol, seed=seed)
    trace = engine.run(net, cfg)

    # reconstruct the observation from the top level only
    levels = len(spec.dims)
    recon = net.variables[f"X{levels}"].value
    for i in range(levels - 1, 0, -1):
        pnum, qsep = spec.children[i - 1], spec.separations[i - 1]
        x = np.zeros((spec.dims[i - 1], t))
        for k in range(pnum):
            shifted = np.zeros_like(recon)
            if k * qsep < t:
                shifted[:, k * qsep :] = recon[:, : t - k * qsep]
            x += net.blocks[f"W{i}_{k}"].matrix @ shifted
        recon = x
    from .kernels import rmse as _rmse

    top_rmse = _rmse(x1, recon)
    fractions = {
        f"X{i}": active_fraction(net.variables[f"X{i}"].value)
        for i in range(2, levels + 1)
    }
    decreasing = all(
        fractions[f"X{i}"] > fractions[f"X{i + 1}"] for i in range(2, levels)
    )
    passed = top_rmse < 0.1 and decreasing
    return ExperimentResult(
        "sparse-hier",
        passed,
        {
            "top_down_rmse": float(top_rmse),
            "active_fractions": fractions,
            "strictly_sparser_upward": decreasing,
            "iterations": trace.iterations,
        },
        net,
        trace,
        extras={"ground": ground, "reconstruction": recon},
    )


EXPERIMENTS = {
    "chain-deterministic": chain_deterministic,
    "chain-nondeterministic": chain_nondeterministic,
    "learn-transitions": learn_transitions,
    "regex-hier": regex_hier,
    "target-tracker": target_tracker,
    "sparse-hier": sparse_hier,
}
