"""Tests for synthetic observation generators."""

import numpy as np
import pytest

from pfnet.builders import build_target_tracker, state_basis
from pfnet.datagen import (
    TargetEvent,
    add_uniform_noise,
    encode_path,
    mix_sequences,
    sample_elementary_path,
    sample_elementary_sequence,
    synth_target_observations,
    target_scene_assignment,
)
from pfnet.engine import total_cost
from pfnet.experiments import DETERMINISTIC_CYCLE, NONDETERMINISTIC_DIAGRAM, TRACKER_SCENE
from pfnet.graph import NetworkError


# -- elementary paths ----------------------------------------------------------


def test_sampled_paths_are_valid_walks():
    for seed in range(20):
        states, trans = sample_elementary_path(NONDETERMINISTIC_DIAGRAM, 30, seed=seed)
        assert len(states) == 30 and len(trans) == 29
        for (a, b), k in zip(zip(states, states[1:]), trans):
            assert NONDETERMINISTIC_DIAGRAM.transitions[k] == (a, b)


def test_sampled_path_start_state_honored():
    states, _ = sample_elementary_path(DETERMINISTIC_CYCLE, 10, seed=0, start=3)
    assert states == [3, 4, 1, 2, 3, 4, 1, 2, 3, 4]


def test_sampled_path_requires_outgoing_transitions():
    from pfnet.builders import TransitionDiagram

    dead_end = TransitionDiagram(2, ((1, 2),))
    with pytest.raises(NetworkError):
        sample_elementary_path(dead_end, 3, seed=0, start=1)


def test_sequence_columns_are_state_bases():
    x = sample_elementary_sequence(DETERMINISTIC_CYCLE, 12, seed=4)
    assert x.shape == (4, 12)
    assert np.allclose(x.sum(axis=0), 1.0)
    assert set(np.unique(x)) == {0.0, 1.0}


def test_sampling_is_deterministic_per_seed():
    a = sample_elementary_sequence(NONDETERMINISTIC_DIAGRAM, 50, seed=9)
    b = sample_elementary_sequence(NONDETERMINISTIC_DIAGRAM, 50, seed=9)
    assert np.array_equal(a, b)


def test_encode_path_one_hot():
    h = encode_path(DETERMINISTIC_CYCLE, [0, 1, 2, 3, 0])
    assert h.shape == (4, 5)
    assert np.allclose(h.sum(axis=0), 1.0)
    assert np.allclose(h[0], [1, 0, 0, 0, 1])


def test_encoded_path_reconstructs_sequence():
    states, trans = sample_elementary_path(NONDETERMINISTIC_DIAGRAM, 15, seed=2)
    from pfnet.builders import transition_basis_matrix

    w = transition_basis_matrix(NONDETERMINISTIC_DIAGRAM)
    x = sample_elementary_sequence(NONDETERMINISTIC_DIAGRAM, 15, seed=2)
    stacked = np.vstack([x[:, :-1], x[:, 1:]])
    assert np.allclose(w @ encode_path(NONDETERMINISTIC_DIAGRAM, trans), stacked)


# -- mixtures and noise ----------------------------------------------------------


def test_mix_sequences_weighted_sum():
    a = np.eye(2)
    b = np.ones((2, 2))
    assert np.allclose(mix_sequences([(0.5, a), (2.0, b)]), 0.5 * a + 2.0 * b)


def test_mix_sequences_validation():
    with pytest.raises(NetworkError):
        mix_sequences([])
    with pytest.raises(NetworkError):
        mix_sequences([(1.0, np.eye(2)), (1.0, np.eye(3))])
    with pytest.raises(NetworkError):
        mix_sequences([(0.0, np.eye(2))])


def test_uniform_noise_bounds_and_determinism():
    x = np.zeros((30, 40))
    noisy = add_uniform_noise(x, 0.01, 0.1, seed=5)
    assert noisy.min() >= 0.01 and noisy.max() <= 0.1
    assert np.array_equal(noisy, add_uniform_noise(x, 0.01, 0.1, seed=5))
    with pytest.raises(NetworkError):
        add_uniform_noise(x, -0.1, 0.1)
    with pytest.raises(NetworkError):
        add_uniform_noise(x, 0.2, 0.1)


# -- target events ----------------------------------------------------------------


def test_event_states_follow_type_cycle():
    ev = TargetEvent("A", onset=1, magnitude=1.0, position_path=(5,) * 9)
    assert ev.states() == [1, 2, 3, 4, 5, 2, 3, 4, 5]
    ev = TargetEvent("B", onset=1, magnitude=1.0, position_path=(5,) * 7)
    assert ev.states() == [6, 7, 8, 9, 7, 8, 9]


def test_event_validation():
    with pytest.raises(NetworkError):
        TargetEvent("C", onset=1, magnitude=1.0, position_path=(1,) * 5)
    with pytest.raises(NetworkError):
        TargetEvent("A", onset=0, magnitude=1.0, position_path=(1,) * 5)
    with pytest.raises(NetworkError):
        TargetEvent("A", onset=1, magnitude=-1.0, position_path=(1,) * 5)
    # duration must complete the state cycle
    with pytest.raises(NetworkError):
        TargetEvent("A", onset=1, magnitude=1.0, position_path=(1,) * 6)
    # position may only step by one
    with pytest.raises(NetworkError):
        TargetEvent("A", onset=1, magnitude=1.0, position_path=(1,) * 4 + (3,) * 5)
    # and only on a repetition step of the cycle
    with pytest.raises(NetworkError):
        TargetEvent("A", onset=1, magnitude=1.0, position_path=(1, 2, 2, 2, 2))


def test_position_change_allowed_on_repetition():
    ev = TargetEvent("A", onset=1, magnitude=1.0, position_path=(3,) * 5 + (4,) * 4)
    assert ev.states()[4:6] == [5, 2]  # change happens across the repeat


# -- scenes ------------------------------------------------------------------------


def test_scene_assignment_satisfies_every_equation():
    """The generated assignment must reconstruct all seven equations
    exactly; this is what makes it a valid generating configuration."""
    vals = target_scene_assignment(list(TRACKER_SCENE), 5, 15, 26)
    net = build_target_tracker(5, 15, 26)
    for var_id, value in vals.items():
        net.variables[var_id].value = value.copy()
    net.make_consistent()
    assert total_cost(net) < 1e-18


def test_scene_magnitudes_stamp_states():
    vals = target_scene_assignment(list(TRACKER_SCENE), 5, 15, 26)
    x4 = vals["X4"]
    # first event: type A, magnitude 1.0, born at slice 2 in state 1
    assert x4[0, 1] == pytest.approx(1.0)
    # second event: type B, magnitude 0.8, born at slice 4 in state 6
    assert x4[5, 3] == pytest.approx(0.8)
    # overlap: both alive in slice 5
    assert vals["X5"][:, 4].sum() == pytest.approx(1.8)


def test_scene_observation_is_translated_emission():
    ev = TargetEvent("A", onset=1, magnitude=2.0, position_path=(4,) * 5)
    x1 = synth_target_observations([ev], 5, 15, 26)
    from pfnet.builders import default_emissions

    em = default_emissions(5, 9)[0]  # state 1 in slice 1
    expected = np.zeros(19)
    expected[3:8] = 2.0 * em
    assert np.allclose(x1[:, 0], expected)
    assert np.allclose(x1[:, 5:], 0.0)


def test_scene_rejects_out_of_range():
    ev = TargetEvent("A", onset=23, magnitude=1.0, position_path=(1,) * 5)
    with pytest.raises(NetworkError):
        target_scene_assignment([ev], 5, 15, 26)
    ev = TargetEvent("A", onset=1, magnitude=1.0, position_path=(20,) * 5)
    with pytest.raises(NetworkError):
        target_scene_assignment([ev], 5, 15, 26)


def test_scene_rejects_unnormalized_emissions():
    ev = TargetEvent("A", onset=1, magnitude=1.0, position_path=(1,) * 5)
    bad = [np.full(5, 0.4) for _ in range(9)]
    with pytest.raises(NetworkError):
        target_scene_assignment([ev], 5, 15, 26, emissions=bad)


def test_overlapping_events_superpose():
    ev1 = TargetEvent("A", onset=1, magnitude=1.0, position_path=(3,) * 5)
    ev2 = TargetEvent("B", onset=1, magnitude=0.5, position_path=(3,) * 4)
    x_both = synth_target_observations([ev1, ev2], 5, 15, 26)
    x1 = synth_target_observations([ev1], 5, 15, 26)
    x2 = synth_target_observations([ev2], 5, 15, 26)
    assert np.allclose(x_both, x1 + x2)
