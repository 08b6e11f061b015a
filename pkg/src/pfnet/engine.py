"""Joint inference and learning over a factor network.

One iteration sweeps the network bottom-up and then top-down:

  for level l = 1 .. L-1:
      up_step(l)        right (and optionally left) NMF updates on the
                        equations whose child stack sits at level l
      averaging         reconcile parent copies with model variables
  for level l = L-1 .. 1:
      down_step(l)      child copies <- W @ parent copies
      averaging         reconcile child copies with model variables

Hidden variables are initialized with small uniform positive values;
observed entries are stamped back into every copy at each averaging
step, which is what pulls the hidden quantities toward explanations of
the data.  Convergence is declared when the worst per-equation
reconstruction RMSE falls below the tolerance.

Two averaging schemes are provided.  Scheme 1 averages parent-slot
copies after up steps and child-slot copies after down steps, per
level.  Scheme 2 averages over the complete copy set of each variable
touched at the level.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .graph import OBSERVED, FactorEquation, FactorNetwork, NetworkError, SegmentRef


@dataclass(frozen=True)
class ObservationOverride:
    """Change a variable's role at a given iteration (e.g. hide it)."""

    iteration: int
    variable: str
    role: str


@dataclass(frozen=True)
class InferenceConfig:
    max_iters: int = 500
    rmse_tol: float = 1e-4
    eps: float = kernels.DEFAULT_EPS
    averaging: str = "scheme1"
    sparseness: kernels.SparsenessSchedule = field(
        default_factory=kernels.SparsenessSchedule
    )
    learning_enabled: bool = True
    init_scale: float = 1e-6
    learn_scale: float = 1.0
    seed: int = 0
    observation_overrides: tuple[ObservationOverride, ...] = ()
    record_trace: bool = True

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.rmse_tol <= 0.0 or self.init_scale <= 0.0:
            raise ValueError("rmse_tol and init_scale must be > 0")
        if self.averaging not in ("scheme1", "scheme2"):
            raise ValueError(f"unknown averaging scheme {self.averaging!r}")


@dataclass
class RunTrace:
    equation_ids: list[str]
    per_equation_rmse: np.ndarray  # iterations x equations
    total_cost: np.ndarray  # iterations
    iterations: int
    converged: bool

    def final_rmse(self) -> np.ndarray:
        return self.per_equation_rmse[-1]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "equation", "rmse", "total_cost"])
            for it in range(self.iterations):
                for j, eq_id in enumerate(self.equation_ids):
                    writer.writerow(
                        [
                            it,
                            eq_id,
                            f"{self.per_equation_rmse[it, j]:.17g}",
                            f"{self.total_cost[it]:.17g}",
                        ]
                    )


class NumericError(RuntimeError):
    def __init__(self, iteration: int, message: str):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


def total_cost(net: FactorNetwork) -> float:
    """Sum over equations of the squared reconstruction error."""
    cost = 0.0
    for eq in net.equations:
        if eq.child_copy is None:
            raise NetworkError("copies not allocated; call make_consistent first")
        recon = net.stacked_block(eq) @ eq.parent_copy
        cost += kernels.total_squared_error(eq.child_copy, recon)
    return cost


def equation_rmse(net: FactorNetwork, eq: FactorEquation) -> float:
    recon = net.stacked_block(eq) @ eq.parent_copy
    return kernels.rmse(eq.child_copy, recon)


class Engine:
    """Runs the update loop on a leveled network."""

    def __init__(self, net: FactorNetwork, config: InferenceConfig):
        if net.n_levels == 0 and net.variables:
            net.assign_levels()
        self.net = net
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self.iteration = 0
        self._eqs_by_level: dict[int, list[FactorEquation]] = {}
        for eq in net.equations:
            self._eqs_by_level.setdefault(eq.level, []).append(eq)
        # variable -> copy slots, precomputed once per run
        self._slots: dict[str, list[tuple]] = {v: [] for v in net.variables}
        for eq in net.equations:
            for kind, segs in (("child", eq.child), ("parent", eq.parents)):
                for seg, a, b in net.segment_rows(segs):
                    self._slots[seg.var].append((eq, kind, seg, a, b))

    # -- initialization -------------------------------------------------

    def initialize(self) -> None:
        """Random positive init of hidden entries and learnable blocks."""
        cfg = self.config
        for var in self.net.variables.values():
            hidden = ~var.observed_mask
            if hidden.any():
                draw = (1.0 - self.rng.random(var.value.shape)) * cfg.init_scale
                var.value[hidden] = draw[hidden]
        if cfg.learning_enabled:
            tied: dict[str, np.ndarray] = {}
            for block in self.net.blocks.values():
                if not block.learnable:
                    continue
                key = block.tie_group
                if key is not None and key in tied:
                    block.matrix = tied[key].copy()
                    continue
                shape = block.matrix.shape
                block.matrix = (1.0 - self.rng.random(shape)) * cfg.learn_scale
                if key is not None:
                    tied[key] = block.matrix
        self.net.make_consistent()

    # -- copy/variable reconciliation ------------------------------------

    def _stamp_variable(self, var_id: str) -> None:
        """Overwrite every copy of a variable with its current value."""
        var = self.net.variables[var_id]
        for eq, kind, seg, a, b in self._slots[var_id]:
            copy = eq.child_copy if kind == "child" else eq.parent_copy
            lo = eq.col_start + seg.shift
            start = max(0, -lo)
            stop = min(eq.n_cols, var.n_cols - lo)
            copy[a:b, :start] = 0.0
            copy[a:b, stop:] = 0.0
            if start < stop:
                copy[a:b, start:stop] = var.value[:, lo + start : lo + stop]

    def _average_variable(self, var_id: str, slots) -> None:
        """Set hidden entries to the mean over the given copy slots."""
        var = self.net.variables[var_id]
        acc = np.zeros_like(var.value)
        cnt = np.zeros(var.n_cols)
        for eq, kind, seg, a, b in slots:
            copy = eq.child_copy if kind == "child" else eq.parent_copy
            lo = eq.col_start + seg.shift
            start = max(0, -lo)
            stop = min(eq.n_cols, var.n_cols - lo)
            if start < stop:
                acc[:, lo + start : lo + stop] += copy[a:b, start:stop]
                cnt[lo + start : lo + stop] += 1.0
        has = cnt > 0.0
        mean = acc[:, has] / cnt[has]
        hidden = ~var.observed_mask[:, has]
        block = var.value[:, has]
        block[hidden] = mean[hidden]
        var.value[:, has] = block
        self._stamp_variable(var_id)

    def average_parents(self, level: int) -> None:
        """Average parent-slot copies from level-`level` equations."""
        eq_ids = {id(eq) for eq in self._eqs_by_level.get(level, ())}
        seen: list[str] = []
        for eq in self._eqs_by_level.get(level, ()):
            for seg in eq.parents:
                if seg.var not in seen:
                    seen.append(seg.var)
        for var_id in seen:
            slots = [
                s
                for s in self._slots[var_id]
                if s[1] == "parent" and id(s[0]) in eq_ids
            ]
            self._average_variable(var_id, slots)

    def average_children(self, level: int) -> None:
        """Average child-slot copies of level-`level` variables."""
        eq_ids = {id(eq) for eq in self._eqs_by_level.get(level, ())}
        seen: list[str] = []
        for eq in self._eqs_by_level.get(level, ()):
            for seg in eq.child:
                if seg.var not in seen:
                    seen.append(seg.var)
        for var_id in seen:
            slots = [
                s
                for s in self._slots[var_id]
                if s[1] == "child" and id(s[0]) in eq_ids
            ]
            self._average_variable(var_id, slots)

    def average_level_up(self, level: int) -> None:
        """Full-copy-set averaging of the parents of level-l equations."""
        seen: list[str] = []
        for eq in self._eqs_by_level.get(level, ()):
            for seg in eq.parents:
                if seg.var not in seen:
                    seen.append(seg.var)
        for var_id in seen:
            self._average_variable(var_id, self._slots[var_id])

    def average_level_down(self, level: int) -> None:
        """Full-copy-set averaging of the level-l child variables."""
        seen: list[str] = []
        for eq in self._eqs_by_level.get(level, ()):
            for seg in eq.child:
                if seg.var not in seen:
                    seen.append(seg.var)
        for var_id in seen:
            self._average_variable(var_id, self._slots[var_id])

    # -- update steps ---------------------------------------------------

    def _learning_blocks(self, eq: FactorEquation) -> list[str]:
        if not self.config.learning_enabled:
            return []
        out = []
        for b in eq.blocks:
            block = self.net.blocks[b]
            if block.learnable and self.iteration % block.update_period == 0:
                out.append(b)
        return out

    def up_step(self, level: int) -> None:
        """Learning then inference updates on the level's equations.

        Left-update contributions are accumulated per block across all
        equations of the level before being applied, so tied blocks and
        blocks shared by several equations receive one joint update.
        """
        cfg = self.config
        theta = cfg.sparseness.value_at(self.iteration)
        eqs = self._eqs_by_level.get(level, ())

        num: dict[str, np.ndarray] = {}
        den: dict[str, np.ndarray] = {}
        for eq in eqs:
            wanted = self._learning_blocks(eq)
            if not wanted:
                continue
            w = self.net.stacked_block(eq)
            if theta > 0.0:
                n, d = kernels.left_update_nonsmooth_terms(
                    eq.child_copy, w, eq.parent_copy, theta, cfg.eps
                )
            else:
                n, d = kernels.left_update_eps_terms(
                    eq.child_copy, w, eq.parent_copy, cfg.eps
                )
            col = 0
            for seg, b in zip(eq.parents, eq.blocks):
                width = self.net.variables[seg.var].dim
                if b in wanted:
                    key = self.net.blocks[b].tie_group or b
                    if key in num:
                        num[key] += n[:, col : col + width]
                        den[key] += d[:, col : col + width]
                    else:
                        num[key] = n[:, col : col + width].copy()
                        den[key] = d[:, col : col + width].copy()
                col += width
        if num:
            updated: set[str] = set()
            for eq in eqs:
                for b in self._learning_blocks(eq):
                    if b in updated:
                        continue
                    block = self.net.blocks[b]
                    key = block.tie_group or b
                    ratio = (num[key] + cfg.eps) / (den[key] + cfg.eps)
                    block.matrix = block.normalization.apply(block.matrix * ratio)
                    updated.add(b)

        for eq in eqs:
            w = self.net.stacked_block(eq)
            if theta > 0.0:
                eq.parent_copy = kernels.right_update_nonsmooth(
                    eq.child_copy, w, eq.parent_copy, theta, cfg.eps
                )
            else:
                eq.parent_copy = kernels.right_update_eps(
                    eq.child_copy, w, eq.parent_copy, cfg.eps
                )

    def down_step(self, level: int) -> None:
        """Top-down value propagation: child copies <- W @ parent copies."""
        for eq in self._eqs_by_level.get(level, ()):
            eq.child_copy = self.net.stacked_block(eq) @ eq.parent_copy

    # -- main loop --------------------------------------------------------

    def _apply_overrides(self) -> None:
        for ov in self.config.observation_overrides:
            if ov.iteration == self.iteration:
                var = self.net.variables[ov.variable]
                var.role = ov.role
                var.observed_mask[:] = ov.role == OBSERVED

    def _check_finite(self) -> None:
        for eq in self.net.equations:
            if not (
                np.all(np.isfinite(eq.child_copy))
                and np.all(np.isfinite(eq.parent_copy))
            ):
                raise NumericError(self.iteration, f"non-finite value in {eq.id}")

    def run(self) -> RunTrace:
        net, cfg = self.net, self.config
        self.initialize()
        n_eq = len(net.equations)
        rmse_hist = np.zeros((cfg.max_iters, n_eq))
        cost_hist = np.zeros(cfg.max_iters)
        scheme2 = cfg.averaging == "scheme2"
        converged = False
        it = 0
        for it in range(cfg.max_iters):
            self.iteration = it
            self._apply_overrides()
            for level in range(1, max(net.n_levels, 1)):
                self.up_step(level)
                if scheme2:
                    self.average_level_up(level)
                else:
                    self.average_parents(level)
            for level in range(max(net.n_levels, 1) - 1, 0, -1):
                self.down_step(level)
                if scheme2:
                    self.average_level_down(level)
                else:
                    self.average_children(level)
            self._check_finite()
            worst = 0.0
            for j, eq in enumerate(net.equations):
                r = equation_rmse(net, eq)
                rmse_hist[it, j] = r
                worst = max(worst, r)
            cost_hist[it] = total_cost(net)
            if worst < cfg.rmse_tol:
                converged = True
                it += 1
                break
        else:
            it += 1
        return RunTrace(
            equation_ids=[eq.id for eq in net.equations],
            per_equation_rmse=rmse_hist[:it],
            total_cost=cost_hist[:it],
            iterations=it,
            converged=converged,
        )


def run(net: FactorNetwork, config: InferenceConfig) -> RunTrace:
    """Initialize hidden state and iterate the network to convergence."""
    return Engine(net, config).run()
