import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from greenwave.errors import ConfigError
from greenwave.signals import (DecisionContext, MaxPressureController, SignalProgram,
                               apply_duration_adjustment, exponential_action_set,
                               fixed_time_controller, linear_action_set, signal_config_from_dict)
from greenwave.simulator import DemandSpec, SimState


def test_exponential_sets_match_table():
    assert exponential_action_set(2).as_set() == {0, 1, -1, 2, -2, 4, -4, 8, -8}
    assert exponential_action_set(3).as_set() == {0, 1, -1, 3, -3, 9, -9, 27, -27}
    assert exponential_action_set(2).values == (-8, -4, -2, -1, 0, 1, 2, 4, 8)


def test_degenerate_base_keeps_nine_slots():
    s = exponential_action_set(1)
    assert len(s) == 9
    assert s.values == (-1, -1, -1, -1, 0, 1, 1, 1, 1)
    assert s[s.zero_index] == 0


@pytest.mark.parametrize("lam", [0, -2, 1.5])
def test_exponential_rejects_bad_base(lam):
    with pytest.raises(ConfigError):
        exponential_action_set(lam)


def test_linear_sets():
    assert linear_action_set([2, 4, 6, 8]).as_set() == {0, 2, -2, 4, -4, 6, -6, 8, -8}
    assert linear_action_set([5, 10, 15, 20]).as_set() == {0, 5, -5, 10, -10, 15, -15, 20, -20}
    assert linear_action_set([1, 2, 4, 8]).values == exponential_action_set(2).values


@pytest.mark.parametrize("steps", [[1, 2, 3], [1, 2, 3, 4, 5], [2, 1, 3, 4], [0, 1, 2, 3]])
def test_linear_rejects_bad_steps(steps):
    with pytest.raises(ConfigError):
        linear_action_set(steps)


@pytest.mark.parametrize("g,delta,expected", [(47, 8, 55), (12, -8, 10), (88, 8, 90)])
def test_adjustment_clips(g, delta, expected):
    prog = SignalProgram((g, 30.0), g_min=10, g_max=90)
    out = apply_duration_adjustment(prog, 0, delta)
    assert out.greens == (expected, 30.0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 8), max_size=60), st.integers(5, 90))
def test_clip_closure(actions, g0):
    aset = exponential_action_set(3)
    prog = SignalProgram((float(g0),) * 3, g_min=5, g_max=90)
    for k, a in enumerate(actions):
        prog = apply_duration_adjustment(prog, k % 3, aset[a])
        assert all(5 <= g <= 90 for g in prog.greens)


def test_signal_json_defaults():
    cfg = signal_config_from_dict({"yellow_s": 3, "all_red_s": 2, "g_min_s": 5, "g_max_s": 90,
                                   "initial_green_s": 30,
                                   "action_set": {"kind": "exponential", "lambda": 2}})
    assert cfg.program_for(3).greens == (30.0, 30.0, 30.0)
    assert cfg.action_set.values == exponential_action_set(2).values
    with pytest.raises(ConfigError):
        signal_config_from_dict({"yellow": 3})


def _ctx(state, node="I00"):
    return DecisionContext(node, state.node_index[node], 0, None, state)


def _state(net, acyclic=True):
    return SimState(net, DemandSpec(()), 0, acyclic=acyclic)


def _fill(state, movement, n):
    from greenwave.simulator import Vehicle
    for k in range(n):
        state.movements[movement].queue.append(Vehicle(10_000 + k, 0))


def test_fixed_time_always_zero(single):
    ctrl = fixed_time_controller()
    state = _state(single, acyclic=False)
    assert state.action_set[ctrl.decide(_ctx(state))] == 0


def test_max_pressure_tie_goes_to_phase_zero(single):
    state = _state(single)
    assert MaxPressureController(single).decide(_ctx(state)) == 0


def test_max_pressure_unique_phase(single):
    state = _state(single)
    _fill(state, "I00:NT", 3)
    _fill(state, "I00:SL", 1)
    assert MaxPressureController(single).decide(_ctx(state)) == 2


def test_max_pressure_hand_enumeration(single):
    # phase 0 holds WT (queue 3); phase 1 holds WL (queue 5); downstream links exit
    state = _state(single)
    _fill(state, "I00:WL", 5)
    _fill(state, "I00:WT", 3)
    ctrl = MaxPressureController(single)
    assert ctrl.pressures(state, "I00") == [3.0, 5.0, 0.0]
    assert ctrl.decide(_ctx(state)) == 1


def test_max_pressure_subtracts_downstream(corridor2):
    state = _state(corridor2)
    # I00:WT feeds I00>I01 whose approach at I01 has three movements
    _fill(state, "I00:WT", 4)
    _fill(state, "I01:WT", 6)
    pressures = MaxPressureController(corridor2).pressures(state, "I00")
    assert pressures[0] == pytest.approx(4 - 6 / 3)
    assert np.argmax(MaxPressureController(corridor2).pressures(state, "I01")) == 0
