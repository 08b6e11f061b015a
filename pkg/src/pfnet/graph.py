"""Declaration and validation of positive factor networks.

A network is a set of non-negative variables coupled by factorization
equations.  Each equation approximates a stacked child value by a
non-negative mixture of stacked parent values:

    [child segments] ~= [W_1 W_2 ... W_p] [parent segments]

A segment is a reference to a variable together with a column shift,
which is how time-replicated structure is expressed: the same model
variable can appear in several equations, and within one equation at
several shifts (for example a sequence X can contribute both x_t and
x_{t+1} rows to the child stack).  Every (equation, segment) pair owns
a local copy of the referenced columns; the engine reconciles copies
with the model variables by averaging.

Equations reference columns col_start + c + shift of a variable for
equation column c.  References outside the variable's column range are
structural zeros: they read as zero and are never written back.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import NormalizationPolicy

HIDDEN = "hidden"
OBSERVED = "observed"


class NetworkError(ValueError):
    """Raised for structural problems: shape mismatch, cycles, bad ids."""


@dataclass(frozen=True)
class SegmentRef:
    """Reference to a variable's columns at a given shift."""

    var: str
    shift: int = 0


def _as_segments(refs) -> tuple[SegmentRef, ...]:
    out = []
    for r in refs:
        if isinstance(r, SegmentRef):
            out.append(r)
        elif isinstance(r, str):
            out.append(SegmentRef(r, 0))
        else:
            var, shift = r
            out.append(SegmentRef(str(var), int(shift)))
    return tuple(out)


@dataclass
class VariableNode:
    id: str
    dim: int
    n_cols: int
    role: str = HIDDEN
    value: np.ndarray | None = None
    observed_mask: np.ndarray | None = None
    level: int | None = None

    def __post_init__(self):
        if self.dim < 1 or self.n_cols < 1:
            raise NetworkError(f"variable {self.id}: dim and n_cols must be >= 1")
        if self.role not in (HIDDEN, OBSERVED):
            raise NetworkError(f"variable {self.id}: unknown role {self.role!r}")
        if self.value is None:
            self.value = np.zeros((self.dim, self.n_cols))
        else:
            self.value = np.asarray(self.value, dtype=float)
            if self.value.shape != (self.dim, self.n_cols):
                raise NetworkError(f"variable {self.id}: value shape mismatch")
            if np.any(self.value < 0.0):
                raise NetworkError(f"variable {self.id}: negative entries")
        if self.observed_mask is None:
            full = self.role == OBSERVED
            self.observed_mask = np.full((self.dim, self.n_cols), full, dtype=bool)
        else:
            self.observed_mask = np.asarray(self.observed_mask, dtype=bool)
            if self.observed_mask.shape != (self.dim, self.n_cols):
                raise NetworkError(f"variable {self.id}: mask shape mismatch")


@dataclass
class ParamBlock:
    id: str
    matrix: np.ndarray
    learnable: bool = False
    tie_group: str | None = None
    normalization: NormalizationPolicy = field(default_factory=NormalizationPolicy)
    update_period: int = 1

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        if self.matrix.ndim != 2:
            raise NetworkError(f"block {self.id}: matrix must be 2-D")
        if np.any(self.matrix < 0.0):
            raise NetworkError(f"block {self.id}: negative entries")
        if self.update_period < 1:
            raise NetworkError(f"block {self.id}: update_period must be >= 1")


@dataclass
class FactorEquation:
    id: str
    child: tuple[SegmentRef, ...]
    parents: tuple[SegmentRef, ...]
    blocks: tuple[str, ...]
    n_cols: int
    col_start: int = 0
    level: int | None = None
    # Local copies of the stacked child and parent values, allocated by
    # make_consistent. Rows follow segment declaration order.
    child_copy: np.ndarray | None = None
    parent_copy: np.ndarray | None = None


class FactorNetwork:
    """A system of coupled non-negative factorization equations."""

    def __init__(self):
        self.variables: dict[str, VariableNode] = {}
        self.blocks: dict[str, ParamBlock] = {}
        self.equations: list[FactorEquation] = []
        self.n_levels: int = 0

    # -- construction -------------------------------------------------

    def add_variable(
        self,
        var_id: str,
        dim: int,
        role: str = HIDDEN,
        n_cols: int = 1,
        value: np.ndarray | None = None,
        observed_mask: np.ndarray | None = None,
    ) -> str:
        if var_id in self.variables:
            raise NetworkError(f"duplicate variable id {var_id!r}")
        self.variables[var_id] = VariableNode(
            var_id, dim, n_cols, role, value, observed_mask
        )
        return var_id

    def add_block(
        self,
        block_id: str,
        matrix: np.ndarray,
        learnable: bool = False,
        tie_group: str | None = None,
        normalization: NormalizationPolicy | None = None,
        update_period: int = 1,
    ) -> str:
        if block_id in self.blocks:
            raise NetworkError(f"duplicate block id {block_id!r}")
        self.blocks[block_id] = ParamBlock(
            block_id,
            matrix,
            learnable,
            tie_group,
            normalization or NormalizationPolicy(),
            update_period,
        )
        return block_id

    def add_equation(
        self,
        child,
        parents,
        blocks,
        n_cols: int | None = None,
        col_start: int = 0,
        eq_id: str | None = None,
    ) -> str:
        """Register child ~= [blocks] [parents].

        child and parents are variable ids, (id, shift) pairs, or
        SegmentRefs; a bare id means shift 0.  One block per parent.
        """
        child_segs = _as_segments(child if isinstance(child, (list, tuple)) else [child])
        parent_segs = _as_segments(parents)
        block_ids = tuple(blocks)
        if not child_segs or not parent_segs:
            raise NetworkError("equation needs at least one child and one parent")
        if len(block_ids) != len(parent_segs):
            raise NetworkError("need exactly one block per parent segment")
        for seg in child_segs + parent_segs:
            if seg.var not in self.variables:
                raise NetworkError(f"unknown variable {seg.var!r}")
        for b in block_ids:
            if b not in self.blocks:
                raise NetworkError(f"unknown block {b!r}")
        if len(set(parent_segs)) != len(parent_segs):
            raise NetworkError("a variable may appear at most once among the parents")
        child_vars = {s.var for s in child_segs}
        if child_vars & {s.var for s in parent_segs}:
            raise NetworkError("a variable may not be both child and parent in one equation")
        if len(set(child_segs)) != len(child_segs):
            raise NetworkError("duplicate child segment")

        child_dim = sum(self.variables[s.var].dim for s in child_segs)
        for seg, b in zip(parent_segs, block_ids):
            m = self.blocks[b].matrix
            if m.shape != (child_dim, self.variables[seg.var].dim):
                raise NetworkError(
                    f"block {b!r} shape {m.shape} does not match "
                    f"child dim {child_dim} x parent dim {self.variables[seg.var].dim}"
                )
        if n_cols is None:
            n_cols = min(
                self.variables[s.var].n_cols - s.shift for s in child_segs
            ) - col_start
        if n_cols < 1:
            raise NetworkError("equation has no columns")
        eq_id = eq_id or f"eq{len(self.equations)}"
        if any(e.id == eq_id for e in self.equations):
            raise NetworkError(f"duplicate equation id {eq_id!r}")
        eq = FactorEquation(eq_id, child_segs, parent_segs, block_ids, n_cols, col_start)
        self.equations.append(eq)
        return eq_id

    # -- structure queries ---------------------------------------------

    def equation(self, eq_id: str) -> FactorEquation:
        for eq in self.equations:
            if eq.id == eq_id:
                return eq
        raise NetworkError(f"unknown equation {eq_id!r}")

    def stacked_block(self, eq: FactorEquation) -> np.ndarray:
        """Horizontal concatenation [W_1 ... W_p] of the equation's blocks."""
        return np.hstack([self.blocks[b].matrix for b in eq.blocks])

    def segment_rows(self, segs: tuple[SegmentRef, ...]):
        """Row offsets of each segment in the stacked copy array."""
        bounds = [0]
        for s in segs:
            bounds.append(bounds[-1] + self.variables[s.var].dim)
        return list(zip(segs, bounds[:-1], bounds[1:]))

    # -- leveling -------------------------------------------------------

    def assign_levels(self) -> "FactorNetwork":
        """Assign each variable a level in 1..L.

        Variables sharing a child stack are forced onto one level; the
        level of a group is one more than the highest level it feeds as
        a parent, with sinks (never a parent) at level 1.  A cyclic
        dependency is rejected.
        """
        names = list(self.variables)
        index = {v: i for i, v in enumerate(names)}
        group = list(range(len(names)))

        def find(i):
            while group[i] != i:
                group[i] = group[group[i]]
                i = group[i]
            return i

        def union(i, j):
            ri, rj = find(i), find(j)
            if ri != rj:
                group[rj] = ri

        for eq in self.equations:
            first = index[eq.child[0].var]
            for seg in eq.child[1:]:
                union(first, index[seg.var])

        # parent group -> set of child groups it must sit above
        children: dict[int, set[int]] = {find(i): set() for i in range(len(names))}
        for eq in self.equations:
            cg = find(index[eq.child[0].var])
            for seg in eq.parents:
                pg = find(index[seg.var])
                if pg == cg:
                    raise NetworkError(
                        f"equation {eq.id}: parent {seg.var!r} is leveled with the child stack"
                    )
                children[pg].add(cg)

        levels: dict[int, int] = {}
        state: dict[int, int] = {}

        def depth(g) -> int:
            if g in levels:
                return levels[g]
            if state.get(g) == 1:
                raise NetworkError("cycle detected in factor network")
            state[g] = 1
            lv = 1 + max((depth(c) for c in children[g]), default=0)
            state[g] = 2
            levels[g] = lv
            return lv

        for g in children:
            depth(g)
        for v in names:
            self.variables[v].level = levels[find(index[v])]
        for eq in self.equations:
            eq.level = self.variables[eq.child[0].var].level
            for seg in eq.parents:
                if self.variables[seg.var].level <= eq.level:
                    raise NetworkError(
                        f"equation {eq.id}: parent {seg.var!r} not above the child level"
                    )
        self.n_levels = max((v.level for v in self.variables.values()), default=0)
        return self

    # -- copies ----------------------------------------------------------

    def read_segment(self, seg: SegmentRef, col_start: int, n_cols: int) -> np.ndarray:
        """Columns col_start+shift .. of the variable, zero outside range."""
        var = self.variables[seg.var]
        out = np.zeros((var.dim, n_cols))
        lo = col_start + seg.shift
        a = max(0, -lo)
        b = min(n_cols, var.n_cols - lo)
        if a < b:
            out[:, a:b] = var.value[:, lo + a : lo + b]
        return out

    def read_stack(self, segs, col_start: int, n_cols: int) -> np.ndarray:
        return np.vstack([self.read_segment(s, col_start, n_cols) for s in segs])

    def make_consistent(self) -> None:
        """Set every local copy equal to its model variable's value."""
        for eq in self.equations:
            eq.child_copy = self.read_stack(eq.child, eq.col_start, eq.n_cols)
            eq.parent_copy = self.read_stack(eq.parents, eq.col_start, eq.n_cols)

    def consistency_gap(self) -> float:
        """Max |copy - variable| over all copies; 0 when consistent."""
        gap = 0.0
        for eq in self.equations:
            if eq.child_copy is None or eq.parent_copy is None:
                raise NetworkError("copies not allocated; call make_consistent first")
            for copy, segs in (
                (eq.child_copy, eq.child),
                (eq.parent_copy, eq.parents),
            ):
                ref = self.read_stack(segs, eq.col_start, eq.n_cols)
                gap = max(gap, float(np.max(np.abs(copy - ref))) if copy.size else 0.0)
        return gap

    # -- merging ----------------------------------------------------------

    def tie_and_merge(self) -> None:
        """Merge column-contiguous equations with identical structure.

        Equations sharing segment layout and block list (one W tied
        across time slices) whose column ranges abut are replaced by a
        single matrix equation covering the union of the columns, so
        learning performs one left update over the merged matrix.
        """
        keyed: dict[tuple, list[FactorEquation]] = {}
        order: list[tuple] = []
        for eq in self.equations:
            key = (eq.child, eq.parents, eq.blocks)
            if key not in keyed:
                keyed[key] = []
                order.append(key)
            keyed[key].append(eq)
        merged: list[FactorEquation] = []
        for key in order:
            eqs = sorted(keyed[key], key=lambda e: e.col_start)
            run = [eqs[0]]
            for eq in eqs[1:]:
                if eq.col_start == run[-1].col_start + run[-1].n_cols:
                    run.append(eq)
                else:
                    merged.append(self._merge_run(run))
                    run = [eq]
            merged.append(self._merge_run(run))
        self.equations = merged

    @staticmethod
    def _merge_run(run: list[FactorEquation]) -> FactorEquation:
        if len(run) == 1:
            return run[0]
        first = run[0]
        total = sum(e.n_cols for e in run)
        return FactorEquation(
            first.id, first.child, first.parents, first.blocks, total, first.col_start
        )

    # -- export -------------------------------------------------------------

    def export_graph_description(self) -> str:
        """Plain-text graph description.

        One line per node (marking observed nodes) and one line per
        parent-to-child arc.  Equations sharing a child carry distinct
        dash counts so arcs from different equations stay separable.
        """
        lines = []
        for v in self.variables.values():
            lines.append(f"node {v.id} dim={v.dim} {v.role}")
        dash_count: dict[str, int] = {}
        for eq in self.equations:
            child_vars = []
            for seg in eq.child:
                if seg.var not in child_vars:
                    child_vars.append(seg.var)
            for cv in child_vars:
                dash_count[cv] = dash_count.get(cv, 0) + 1
            for seg, b in zip(eq.parents, eq.blocks):
                for cv in child_vars:
                    lines.append(
                        f"arc {seg.var} -> {cv} block={b} dashes={dash_count[cv]}"
                    )
        return "\n".join(lines) + "\n"
