"""Compile high-level model descriptions into factor networks.

Covers four families of models:

  * chain models: a state sequence X coupled to per-step transition
    activations H through a transition basis matrix,
  * two-level hierarchical transition models with a coupling matrix
    pairing upper and lower transitions,
  * the target tracker: five observation-side variables and a stack of
    transition/coupling equations describing multiple moving patterns,
  * sparse hierarchies: each level is a mixture of several shifted
    copies of the level above.

States are 1-based; the off state is represented by `None` and encodes
as the all-zero basis vector.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .graph import HIDDEN, OBSERVED, FactorNetwork, NetworkError
from .kernels import NormalizationPolicy

OFF = None


@dataclass(frozen=True)
class TransitionDiagram:
    """States 1..M plus directed transitions; None marks the off state."""

    state_count: int
    transitions: tuple[tuple[int | None, int | None], ...]
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.state_count < 1:
            raise NetworkError("need at least one state")
        if not self.transitions:
            raise NetworkError("need at least one transition")
        for src, dst in self.transitions:
            for s in (src, dst):
                if s is not None and not 1 <= s <= self.state_count:
                    raise NetworkError(f"state {s} out of range 1..{self.state_count}")
        if self.labels is not None and len(self.labels) != len(self.transitions):
            raise NetworkError("one label per transition")

    def outgoing(self, state: int | None):
        """Sorted (destination, transition index) pairs leaving `state`."""
        out = [
            (dst, k)
            for k, (src, dst) in enumerate(self.transitions)
            if src == state
        ]
        return sorted(out, key=lambda p: (p[0] is None, p[0], p[1]))

    def to_dict(self) -> dict:
        return {
            "states": self.state_count,
            "transitions": [[src, dst] for src, dst in self.transitions],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TransitionDiagram":
        return cls(
            state_count=int(data["states"]),
            transitions=tuple(
                (None if s is None else int(s), None if d is None else int(d))
                for s, d in data["transitions"]
            ),
        )

    @classmethod
    def from_json(cls, path) -> "TransitionDiagram":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class CouplingTable:
    """Pairs of (upper transition index, lower transition index), 1-based."""

    pairs: tuple[tuple[int, int], ...]

    def validate(self, r_upper: int, r_lower: int) -> None:
        for u, l in self.pairs:
            if not 1 <= u <= r_upper:
                raise NetworkError(f"upper transition {u} out of range 1..{r_upper}")
            if not 1 <= l <= r_lower:
                raise NetworkError(f"lower transition {l} out of range 1..{r_lower}")

    @classmethod
    def from_dict(cls, data: dict) -> "CouplingTable":
        return cls(pairs=tuple((int(u), int(l)) for u, l in data["pairs"]))


def state_basis(i: int | None, m: int) -> np.ndarray:
    """Unit vector e_i, or the zero vector for the off state."""
    v = np.zeros(m)
    if i is not None:
        if not 1 <= i <= m:
            raise NetworkError(f"state {i} out of range 1..{m}")
        v[i - 1] = 1.0
    return v


def transition_basis_matrix(diagram: TransitionDiagram) -> np.ndarray:
    """2M x R matrix whose column k stacks the source and destination
    basis vectors of transition k, in declaration order."""
    m = diagram.state_count
    cols = [
        np.concatenate([state_basis(src, m), state_basis(dst, m)])
        for src, dst in diagram.transitions
    ]
    return np.column_stack(cols)


def coupling_matrix(table: CouplingTable, r_upper: int, r_lower: int) -> np.ndarray:
    """(R_upper + R_lower) x Q binary matrix pairing transition bases."""
    table.validate(r_upper, r_lower)
    cols = [
        np.concatenate([state_basis(u, r_upper), state_basis(l, r_lower)])
        for u, l in table.pairs
    ]
    return np.column_stack(cols)


# -- chain models ---------------------------------------------------------


def build_chain_network(
    w: np.ndarray,
    t: int,
    observed: bool = True,
    learnable: bool = False,
    normalization: NormalizationPolicy | None = None,
    x_id: str = "X",
    h_id: str = "H",
    block_id: str = "W",
) -> FactorNetwork:
    """Sequence model: the stack (x_t; x_{t+1}) is a mixture of
    transition basis columns, one equation spanning all T-1 steps."""
    w = np.asarray(w, dtype=float)
    if w.shape[0] % 2 != 0:
        raise NetworkError("transition basis must have an even row count")
    if t < 2:
        raise NetworkError("need at least two time slices")
    m = w.shape[0] // 2
    net = FactorNetwork()
    net.add_variable(x_id, m, OBSERVED if observed else HIDDEN, t)
    net.add_variable(h_id, w.shape[1], HIDDEN, t - 1)
    net.add_block(block_id, w, learnable=learnable, normalization=normalization)
    net.add_equation(
        [(x_id, 0), (x_id, 1)], [(h_id, 0)], [block_id], n_cols=t - 1, eq_id="chain"
    )
    net.assign_levels()
    return net


def build_two_level_network(
    w1: np.ndarray,
    w2: np.ndarray,
    u: np.ndarray,
    t: int,
    observed_lower: bool = False,
) -> FactorNetwork:
    """Two coupled chain models plus a transition coupling equation."""
    w1 = np.asarray(w1, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    u = np.asarray(u, dtype=float)
    r1, r2 = w1.shape[1], w2.shape[1]
    if u.shape[0] != r1 + r2:
        raise NetworkError(
            f"coupling rows {u.shape[0]} != upper {r2} + lower {r1} transitions"
        )
    net = FactorNetwork()
    net.add_variable("X1", w1.shape[0] // 2, OBSERVED if observed_lower else HIDDEN, t)
    net.add_variable("X2", w2.shape[0] // 2, HIDDEN, t)
    net.add_variable("H1", r1, HIDDEN, t - 1)
    net.add_variable("H2", r2, HIDDEN, t - 1)
    net.add_variable("V", u.shape[1], HIDDEN, t - 1)
    net.add_block("W1", w1)
    net.add_block("W2", w2)
    net.add_block("U", u)
    net.add_equation([("X1", 0), ("X1", 1)], ["H1"], ["W1"], n_cols=t - 1, eq_id="E1")
    net.add_equation([("X2", 0), ("X2", 1)], ["H2"], ["W2"], n_cols=t - 1, eq_id="E2")
    net.add_equation(["H2", "H1"], ["V"], ["U"], n_cols=t - 1, eq_id="E3")
    net.assign_levels()
    return net


# -- target tracker --------------------------------------------------------

# The default target state diagram: two target types sharing one state
# space. Type A cycles through states 1..5 and repeats from state 2;
# type B cycles through 6..9 and repeats from state 7. Targets are born
# from and die into the off state.
TARGET_STATE_DIAGRAM = TransitionDiagram(
    state_count=9,
    transitions=(
        (1, 2),  # t1
        (2, 3),  # t2
        (3, 4),  # t3
        (4, 5),  # t4
        (5, OFF),  # t5   A dies
        (5, 2),  # t6   A repeats
        (OFF, 1),  # t7   A born
        (6, 7),  # t8
        (7, 8),  # t9
        (8, 9),  # t10
        (9, OFF),  # t11  B dies
        (9, 7),  # t12  B repeats
        (OFF, 6),  # t13  B born
    ),
)

# Type label for each target state: states 1..5 are type A (label 1),
# states 6..9 are type B (label 2).
TARGET_TYPE_OF_STATE = (1, 1, 1, 1, 1, 2, 2, 2, 2)

# High-level position actions: a1 hold, a2 change, a3 appear, a4 vanish.
POSITION_ACTIONS = ("hold", "change", "appear", "vanish")

# Which position actions may co-occur with each target transition.
# Repetition transitions (t6, t12) allow both holding and changing the
# position; births allow appear, deaths allow vanish; everything else
# holds the position.
TARGET_POSITION_COUPLING = (
    (6, 2),
    (6, 1),
    (12, 2),
    (12, 1),
    (7, 3),
    (13, 3),
    (5, 4),
    (11, 4),
    (1, 1),
    (2, 1),
    (3, 1),
    (4, 1),
    (8, 1),
    (9, 1),
    (10, 1),
)


def default_emissions(pattern_size: int = 5, count: int = 9) -> list[np.ndarray]:
    """Pairwise distinct two-row emission patterns with unit column sum.

    Unit sums keep the emission, position, and observation bands of the
    translation coupling carrying equal mass, which is required for a
    scene to be exactly representable by the tracker network.  The two
    rows get a different weight split per pattern so that no pattern is
    a vertical shift of another; otherwise a state at one position
    would be indistinguishable from a different state one position
    over.
    """
    combos = itertools.combinations(range(pattern_size), 2)
    out = []
    for k, pair in enumerate(itertools.islice(combos, count)):
        v = np.zeros(pattern_size)
        delta = 0.04 * (k + 1)
        v[pair[0]] = 0.5 - delta
        v[pair[1]] = 0.5 + delta
        out.append(v)
    if len(out) < count:
        raise NetworkError("pattern_size too small for that many emissions")
    return out


def position_transition_diagram(p: int) -> TransitionDiagram:
    """Position states 1..P with hold/increment/decrement moves plus
    transitions from and to the off state."""
    if p < 2:
        raise NetworkError("need at least two positions")
    transitions = []
    transitions += [(i, i) for i in range(1, p + 1)]  # hold
    transitions += [(i, i + 1) for i in range(1, p)]  # increment
    transitions += [(i + 1, i) for i in range(1, p)]  # decrement
    transitions += [(OFF, i) for i in range(1, p + 1)]  # appear
    transitions += [(i, OFF) for i in range(1, p + 1)]  # vanish
    return TransitionDiagram(state_count=p, transitions=tuple(transitions))


def position_action_of(diagram: TransitionDiagram, k: int) -> int:
    """High-level action index (1..4) of position transition k (0-based)."""
    src, dst = diagram.transitions[k]
    if src is None:
        return 3
    if dst is None:
        return 4
    return 1 if src == dst else 2


def pattern_translation_coupling(pattern_size: int, p: int) -> np.ndarray:
    """Coupling between emission patterns, positions, and observations.

    For emission row i at position j the pattern lands on observation
    row i + j - 1 (1-based), so the observation band needs
    P - 1 + pattern_size rows. Each column activates exactly one row
    per band."""
    if pattern_size < 1 or p < 1:
        raise NetworkError("pattern_size and p must be >= 1")
    obs_dim = p - 1 + pattern_size
    cols = []
    for i in range(1, pattern_size + 1):
        for j in range(1, p + 1):
            col = np.zeros(pattern_size + p + obs_dim)
            col[i - 1] = 1.0
            col[pattern_size + j - 1] = 1.0
            col[pattern_size + p + i + j - 2] = 1.0
            cols.append(col)
    return np.column_stack(cols)


def build_target_tracker(
    pattern_size: int = 5,
    p: int = 15,
    t: int = 26,
    emissions: list[np.ndarray] | None = None,
    state_diagram: TransitionDiagram = TARGET_STATE_DIAGRAM,
    type_of_state: tuple[int, ...] = TARGET_TYPE_OF_STATE,
    n_types: int = 2,
    position_coupling: tuple[tuple[int, int], ...] = TARGET_POSITION_COUPLING,
) -> FactorNetwork:
    """Multi-target tracking network.

    Variables: X1 observation sequence, X2 positions, X3 emission
    patterns, X4 target states, X5 type labels, plus coupling
    activations U1..U3 and transition activations H1..H3, V1, V2.
    """
    n_states = state_diagram.state_count
    if emissions is None:
        emissions = default_emissions(pattern_size, n_states)
    if len(emissions) != n_states:
        raise NetworkError("one emission pattern per target state")
    emissions = [np.asarray(e, dtype=float) for e in emissions]
    if any(e.shape != (pattern_size,) for e in emissions):
        raise NetworkError("emission dimension must equal pattern_size")
    if len(type_of_state) != n_states:
        raise NetworkError("one type label per state")

    pos_diag = position_transition_diagram(p)
    r_pos = len(pos_diag.transitions)
    r_state = len(state_diagram.transitions)
    obs_dim = p - 1 + pattern_size

    w1 = pattern_translation_coupling(pattern_size, p)
    w2 = transition_basis_matrix(pos_diag)
    w3 = np.vstack(
        [np.eye(n_states), np.column_stack(emissions)]
    )
    w4 = np.vstack(
        [
            np.column_stack(
                [state_basis(position_action_of(pos_diag, k) , 4) for k in range(r_pos)]
            ),
            np.eye(r_pos),
        ]
    )
    w5 = np.column_stack(
        [
            np.concatenate([state_basis(tk, r_state), state_basis(ak, 4)])
            for tk, ak in position_coupling
        ]
    )
    w6 = transition_basis_matrix(state_diagram)
    w7 = np.vstack(
        [
            np.column_stack([state_basis(ty, n_types) for ty in type_of_state]),
            np.eye(n_states),
        ]
    )

    net = FactorNetwork()
    net.add_variable("X1", obs_dim, OBSERVED, t)
    net.add_variable("X2", p, HIDDEN, t)
    net.add_variable("X3", pattern_size, HIDDEN, t)
    net.add_variable("X4", n_states, HIDDEN, t)
    net.add_variable("X5", n_types, HIDDEN, t)
    net.add_variable("U1", pattern_size * p, HIDDEN, t)
    net.add_variable("U2", n_states, HIDDEN, t)
    net.add_variable("U3", n_states, HIDDEN, t)
    net.add_variable("H1", r_pos, HIDDEN, t - 1)
    net.add_variable("H2", 4, HIDDEN, t - 1)
    net.add_variable("H3", r_state, HIDDEN, t - 1)
    net.add_variable("V1", r_pos, HIDDEN, t - 1)
    net.add_variable("V2", len(position_coupling), HIDDEN, t - 1)

    net.add_block("W1", w1)
    net.add_block("W2", w2)
    net.add_block("W3", w3)
    net.add_block("W4", w4)
    net.add_block("W5", w5)
    net.add_block("W6", w6)
    net.add_block("W7", w7)

    net.add_equation(["X3", "X2", "X1"], ["U1"], ["W1"], n_cols=t, eq_id="E1")
    net.add_equation(["X4", "X3"], ["U2"], ["W3"], n_cols=t, eq_id="E2")
    net.add_equation(["X5", "X4"], ["U3"], ["W7"], n_cols=t, eq_id="E3")
    net.add_equation([("X2", 0), ("X2", 1)], ["H1"], ["W2"], n_cols=t - 1, eq_id="E4")
    net.add_equation([("X4", 0), ("X4", 1)], ["H3"], ["W6"], n_cols=t - 1, eq_id="E5")
    net.add_equation(["H2", "H1"], ["V1"], ["W4"], n_cols=t - 1, eq_id="E6")
    net.add_equation(["H3", "H2"], ["V2"], ["W5"], n_cols=t - 1, eq_id="E7")
    net.assign_levels()
    return net


# -- sparse hierarchy -------------------------------------------------------


@dataclass(frozen=True)
class HierarchySpec:
    """Shape of a sparse hierarchy.

    dims[i] is the dimension of level i+1's variable (dims[0] is the
    observation dimension); children[i] and separations[i] describe how
    level i+1 mixes shifted copies of level i+2.
    """

    dims: tuple[int, ...]
    children: tuple[int, ...]
    separations: tuple[int, ...]
    t: int

    def __post_init__(self):
        if len(self.dims) < 2:
            raise NetworkError("need at least two levels")
        if len(self.children) != len(self.dims) - 1 or len(self.separations) != len(
            self.children
        ):
            raise NetworkError("children/separations must cover levels 1..L-1")
        if any(d < 1 for d in self.dims) or self.t < 1:
            raise NetworkError("dims and t must be >= 1")
        if any(p < 1 for p in self.children) or any(q < 1 for q in self.separations):
            raise NetworkError("children and separations must be >= 1")


def build_sparse_hierarchy(
    spec: HierarchySpec,
    learnable: bool = True,
    observed_bottom: bool = True,
    normalization: NormalizationPolicy | None = None,
) -> FactorNetwork:
    """Each level is a non-negative mixture of `children` copies of the
    level above, shifted backward in time by multiples of `separation`.
    Shifted columns before the first slice read as zero."""
    if normalization is None:
        normalization = NormalizationPolicy("unit")
    levels = len(spec.dims)
    net = FactorNetwork()
    for i, dim in enumerate(spec.dims, start=1):
        role = OBSERVED if (i == 1 and observed_bottom) else HIDDEN
        net.add_variable(f"X{i}", dim, role, spec.t)
    for i in range(1, levels):
        p, q = spec.children[i - 1], spec.separations[i - 1]
        parents = [(f"X{i + 1}", -k * q) for k in range(p)]
        blocks = []
        for k in range(p):
            bid = f"W{i}_{k}"
            net.add_block(
                bid,
                np.ones((spec.dims[i - 1], spec.dims[i])),
                learnable=learnable,
                normalization=normalization,
            )
            blocks.append(bid)
        net.add_equation(
            [(f"X{i}", 0)], parents, blocks, n_cols=spec.t, eq_id=f"E{i}"
        )
    net.assign_levels()
    return net
