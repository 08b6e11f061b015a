"""Synthetic observation generators.

Elementary state sequences are sampled by walking a transition diagram;
their encodings have at most one active transition per step, which is
what makes them recoverable by inference.  Mixtures and uniform noise
reproduce the harder observation regimes, and target scenes assemble
multi-pattern observations for the tracking network.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .builders import (
    TARGET_POSITION_COUPLING,
    TARGET_STATE_DIAGRAM,
    TARGET_TYPE_OF_STATE,
    TransitionDiagram,
    default_emissions,
    position_action_of,
    position_transition_diagram,
    state_basis,
)
from .graph import NetworkError


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def sample_elementary_path(
    diagram: TransitionDiagram, t: int, seed=0, start: int | None = None
) -> tuple[list[int], list[int]]:
    """Random walk over the diagram's explicit states.

    Returns (states, transition indices); transition indices are
    0-based positions in the diagram's declaration order.  The initial
    state is uniform over 1..M unless given; branching picks uniformly
    among the outgoing transitions (sorted by destination).
    """
    if t < 1:
        raise NetworkError("need at least one time slice")
    rng = _rng(seed)
    state = start if start is not None else int(rng.integers(1, diagram.state_count + 1))
    states = [state]
    trans: list[int] = []
    for _ in range(t - 1):
        options = [(d, k) for d, k in diagram.outgoing(state) if d is not None]
        if not options:
            raise NetworkError(f"state {state} has no outgoing transition")
        dst, k = options[int(rng.integers(len(options)))]
        states.append(dst)
        trans.append(k)
        state = dst
    return states, trans


def sample_elementary_sequence(diagram: TransitionDiagram, t: int, seed=0) -> np.ndarray:
    """M x T matrix whose columns are the basis vectors of a sampled path."""
    states, _ = sample_elementary_path(diagram, t, seed)
    return np.column_stack([state_basis(s, diagram.state_count) for s in states])


def encode_path(diagram: TransitionDiagram, transitions: list[int]) -> np.ndarray:
    """One-hot R x (T-1) encoding of a transition index sequence."""
    h = np.zeros((len(diagram.transitions), len(transitions)))
    for c, k in enumerate(transitions):
        h[k, c] = 1.0
    return h


def mix_sequences(terms: list[tuple[float, np.ndarray]]) -> np.ndarray:
    """Entrywise sum of scale * matrix over the terms."""
    if not terms:
        raise NetworkError("need at least one term")
    shape = np.asarray(terms[0][1]).shape
    out = np.zeros(shape)
    for scale, x in terms:
        x = np.asarray(x, dtype=float)
        if x.shape != shape:
            raise NetworkError(f"shape mismatch: {x.shape} vs {shape}")
        if scale <= 0:
            raise NetworkError("scales must be positive")
        out += scale * x
    return out


def add_uniform_noise(x: np.ndarray, lo: float, hi: float, seed=0) -> np.ndarray:
    """x plus i.i.d. uniform noise in [lo, hi]."""
    if not 0.0 <= lo <= hi:
        raise NetworkError("need 0 <= lo <= hi")
    x = np.asarray(x, dtype=float)
    return x + _rng(seed).uniform(lo, hi, size=x.shape)


# -- target scenes -----------------------------------------------------------

# Cyclic state paths per target type: the full cycle runs once, then
# the repeat suffix loops.
_TYPE_CYCLES = {
    "A": ([1, 2, 3, 4, 5], [2, 3, 4, 5]),
    "B": ([6, 7, 8, 9], [7, 8, 9]),
}


@dataclass(frozen=True)
class TargetEvent:
    """One target: a type, birth time, magnitude, and position track.

    position_path has one entry per alive slice.  The position may only
    change on a repetition step of the state cycle, by one position at
    a time.
    """

    target_type: str
    onset: int  # 1-based first alive slice
    magnitude: float
    position_path: tuple[int, ...]

    def __post_init__(self):
        if self.target_type not in _TYPE_CYCLES:
            raise NetworkError(f"unknown target type {self.target_type!r}")
        if self.onset < 1 or self.magnitude <= 0 or not self.position_path:
            raise NetworkError("invalid event")
        base, repeat = _TYPE_CYCLES[self.target_type]
        extra = len(self.position_path) - len(base)
        if extra < 0 or extra % len(repeat) != 0:
            raise NetworkError(
                f"duration {len(self.position_path)} does not complete the state cycle"
            )
        states = self.states()
        for j, (a, b) in enumerate(zip(self.position_path, self.position_path[1:])):
            if abs(b - a) > 1:
                raise NetworkError("position steps must be in {-1, 0, +1}")
            repeating = states[j + 1] == repeat[0] and states[j] == base[-1]
            if b != a and not repeating:
                raise NetworkError(
                    f"position change at step {j} is not on a repetition transition"
                )

    def states(self) -> list[int]:
        base, repeat = _TYPE_CYCLES[self.target_type]
        out = list(base)
        while len(out) < len(self.position_path):
            out.extend(repeat)
        return out[: len(self.position_path)]


def target_scene_assignment(
    events: list[TargetEvent],
    pattern_size: int = 5,
    p: int = 15,
    t: int = 26,
    emissions: list[np.ndarray] | None = None,
) -> dict[str, np.ndarray]:
    """Full variable assignment generating a scene.

    Returns values for every tracker variable such that all equations
    reconstruct exactly; X1 is the observable part.
    """
    n_states = TARGET_STATE_DIAGRAM.state_count
    if emissions is None:
        emissions = default_emissions(pattern_size, n_states)
    emissions = [np.asarray(e, dtype=float) for e in emissions]
    for e in emissions:
        if abs(float(e.sum()) - 1.0) > 1e-9:
            raise NetworkError(
                "emission patterns must sum to 1 for scenes to be exactly "
                "representable (band sums of the translation coupling match)"
            )
    pos_diag = position_transition_diagram(p)
    r_pos = len(pos_diag.transitions)
    r_state = len(TARGET_STATE_DIAGRAM.transitions)
    obs_dim = p - 1 + pattern_size
    state_tr_index = {sd: k for k, sd in enumerate(TARGET_STATE_DIAGRAM.transitions)}
    pos_tr_index = {sd: k for k, sd in enumerate(pos_diag.transitions)}
    coupling_index = {pair: k for k, pair in enumerate(TARGET_POSITION_COUPLING)}

    vals = {
        "X1": np.zeros((obs_dim, t)),
        "X2": np.zeros((p, t)),
        "X3": np.zeros((pattern_size, t)),
        "X4": np.zeros((n_states, t)),
        "X5": np.zeros((2, t)),
        "U1": np.zeros((pattern_size * p, t)),
        "U2": np.zeros((n_states, t)),
        "U3": np.zeros((n_states, t)),
        "H1": np.zeros((r_pos, t - 1)),
        "H2": np.zeros((4, t - 1)),
        "H3": np.zeros((r_state, t - 1)),
        "V1": np.zeros((r_pos, t - 1)),
        "V2": np.zeros((len(TARGET_POSITION_COUPLING), t - 1)),
    }

    for ev in events:
        states = ev.states()
        mag = ev.magnitude
        last = ev.onset + len(states) - 1
        if last > t:
            raise NetworkError("event extends past the scene")
        # per-slice stamps
        for j, (s, pos) in enumerate(zip(states, ev.position_path)):
            if not 1 <= pos <= p:
                raise NetworkError(f"position {pos} out of range 1..{p}")
            col = ev.onset - 1 + j
            em = emissions[s - 1]
            vals["X4"][s - 1, col] += mag
            vals["X5"][TARGET_TYPE_OF_STATE[s - 1] - 1, col] += mag
            vals["X3"] [:, col] += mag * em
            vals["X2"][pos - 1, col] += mag
            vals["X1"][pos - 1 : pos - 1 + pattern_size, col] += mag * em
            vals["U1"][:, col] += mag * np.kron(em, state_basis(pos, p))
            vals["U2"][s - 1, col] += mag
            vals["U3"][s - 1, col] += mag
        # per-step transition stamps, including birth and death steps
        steps = []
        if ev.onset > 1:
            steps.append((ev.onset - 2, (None, states[0]), "appear"))
        for j in range(len(states) - 1):
            src, dst = states[j], states[j + 1]
            pa, pb = ev.position_path[j], ev.position_path[j + 1]
            kind = "hold" if pa == pb else "change"
            steps.append((ev.onset - 1 + j, (src, dst), kind, (pa, pb)))
        if last < t:
            steps.append((last - 1, (states[-1], None), "vanish"))
        for step in steps:
            col, sd, kind = step[0], step[1], step[2]
            tr = state_tr_index[sd]
            action = {"hold": 1, "change": 2, "appear": 3, "vanish": 4}[kind]
            vals["H3"][tr, col] += mag
            vals["V2"][coupling_index[(tr + 1, action)], col] += mag
            if kind == "appear":
                pos_sd = (None, ev.position_path[0])
            elif kind == "vanish":
                pos_sd = (ev.position_path[-1], None)
            else:
                pos_sd = step[3]
            pk = pos_tr_index[pos_sd]
            vals["H1"][pk, col] += mag
            vals["H2"][action - 1, col] += mag
            vals["V1"][pk, col] += mag
            assert position_action_of(pos_diag, pk) == action
    return vals


def synth_target_observations(
    events: list[TargetEvent],
    pattern_size: int = 5,
    p: int = 15,
    t: int = 26,
    emissions: list[np.ndarray] | None = None,
) -> np.ndarray:
    """Observation matrix X1 of a scene; contributions of simultaneous
    targets add."""
    return target_scene_assignment(events, pattern_size, p, t, emissions)["X1"]
