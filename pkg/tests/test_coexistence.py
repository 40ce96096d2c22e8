import dataclasses

import pytest

from nru_coexist import ConvergenceError, ParameterError
from nru_coexist.coexistence import (
    AccessState,
    airtime_ratios,
    gnb_access_probability,
    optimal_initial_window,
    series_access_probability,
    slot_breakdown,
    solve_access_fixed_point,
    solve_coexistence,
    tx_probabilities,
    wifi_access_probability,
)
from nru_coexist.params import LBT_CLASSES, lbt_class_for_mcot, NruParams, params_summary, WifiParams

WIFI = WifiParams()
NRU = NruParams()


def test_params():
    assert WIFI.handshake_time == pytest.approx(108.4e-6, rel=1e-9)
    assert WIFI.success_time() == pytest.approx(330.622e-6, rel=1e-6)
    assert WIFI.collision_time == pytest.approx(39.433e-6, abs=1e-9)
    assert WIFI.with_payload(800 * 8).success_time() < WIFI.success_time()
    assert NRU.occupancy_time == pytest.approx(8.25e-3)
    assert NRU.defer_time(WIFI.slot) == pytest.approx(43e-6)

    summary = params_summary(WIFI, NRU)
    assert summary["T_s_w"] == WIFI.success_time()
    assert summary["T_s_l"] == NRU.occupancy_time

    assert LBT_CLASSES[3].windows == [15, 31, 63]
    assert LBT_CLASSES[4].nearest_window(200) == 255
    assert LBT_CLASSES[1].nearest_window(1) == 3
    assert lbt_class_for_mcot(2e-3).priority == 1
    assert lbt_class_for_mcot(10e-3).priority == 3
    assert str(LBT_CLASSES[2]) == "class 2"

    shorter = NRU.with_mcot(2e-3)
    assert shorter.priority_class == 1
    assert shorter.occupancy_time == pytest.approx(2.25e-3)
    assert NRU.with_mcot(10e-3).priority_class == 3

    with pytest.raises(ParameterError):
        lbt_class_for_mcot(5e-3)

    with pytest.raises(ParameterError):
        NruParams(mcot=2e-3)  # Not allowed for class 3

    with pytest.raises(ParameterError):
        NruParams(access_form="foo")

    with pytest.raises(ParameterError):
        NruParams(priority_class=5)

    with pytest.raises(ParameterError):
        WifiParams(window=0)

    with pytest.raises(ParameterError):
        WifiParams(rate=0)


def test_access_probabilities():
    # Collision-free limit
    assert wifi_access_probability(0, 16, 6) == pytest.approx(2 / 17)
    assert wifi_access_probability(0, 31, 6) == pytest.approx(2 / 32)

    # Removable singularity at p = 1/2
    for p in (0.5 - 1e-4, 0.5 - 1e-7, 0.5, 0.5 + 1e-7, 0.5 + 1e-4):
        assert wifi_access_probability(p, 16, 6) == pytest.approx(series_access_probability(p, 16, 6), rel=1e-9)

    # Collision-free gNB: one attempt per ICCA of L idle slots plus the transmission slot
    assert NRU.access_form == "renewal"
    assert gnb_access_probability(0, NRU) == pytest.approx(1 / (NRU.icca_slots + 1))
    assert gnb_access_probability(1, NRU) == 0

    # The two closed forms agree at p = 0
    expected = 4 / (2 * NRU.icca_slots + 2 * NRU.window + 1)
    geometric = dataclasses.replace(NRU, access_form="geometric")
    published = dataclasses.replace(NRU, access_form="as-published")
    assert gnb_access_probability(0, geometric) == pytest.approx(expected)
    assert gnb_access_probability(0, published) == pytest.approx(expected, rel=1e-6)

    # Renewal and geometric forms stay probabilities on all of [0, 1], and decrease with p
    for nru in (NRU.with_window(200), geometric.with_window(200)):
        values = [gnb_access_probability(i / 100, nru) for i in range(101)]
        assert all(0 <= v <= 1 for v in values)
        assert all(a > b for a, b in zip(values[:-1], values[1:-1]))

    # As-published form crosses its pole below p = 1/2 once W is large
    with pytest.raises(ConvergenceError) as exc:
        gnb_access_probability(0.46, published.with_window(200))
    assert "pole" in str(exc.value)
    assert exc.value.residuals["gnb-access"] < 0

    # Single WiFi node always succeeds when it transmits
    state = tx_probabilities(AccessState(0.3, 0.2, 0.0, 0.3), 1)
    assert state.P_tr_w == pytest.approx(0.3)
    assert state.P_s_w == 1


@pytest.mark.parametrize("n_wifi", [5, 10, 15, 20, 25, 30])
def test_fixed_point(n_wifi):
    for nru in (NRU, NRU.with_window(200)):
        state = solve_access_fixed_point(WIFI, nru, n_wifi)
        residuals = state.residuals(WIFI, nru, n_wifi)
        assert max(abs(x) for x in residuals.values()) < 1e-9
        assert 0 < state.tau_l < 1
        assert 0 < state.tau_w < 2 / 17
        assert state.P_s_l == 1
        assert 0 < state.P_s_w < 1

        slots = slot_breakdown(state, WIFI, nru, n_wifi)
        assert sum(slots.fractions().values()) == pytest.approx(1)
        assert slots.T_lw == nru.occupancy_time


def test_fixed_point_edge_cases():
    # Single WiFi node, silent gNB: no collisions at all
    state = solve_access_fixed_point(WIFI, None, 1)
    assert state.tau_w == pytest.approx(2 / 17)
    assert state.p_w == 0
    assert state.tau_l == 0
    assert state.P_s_w == 1

    # Damped substitution not allowed to finish: bracketing takes over
    state = solve_access_fixed_point(WIFI, NRU, 10, max_iterations=3)
    assert state.iterations > 3
    assert max(abs(x) for x in state.residuals(WIFI, NRU, 10).values()) < 1e-9

    with pytest.raises(ParameterError):
        solve_access_fixed_point(WIFI, NRU, 0)

    with pytest.raises(ParameterError):
        solve_access_fixed_point(WIFI, NRU, 2.5)

    with pytest.raises(ConvergenceError) as exc:
        solve_access_fixed_point(WIFI, NRU, 10, tolerance=0.0)
    assert exc.value.residuals

    with pytest.raises(ParameterError):
        tx_probabilities(state.__class__(1.5, 0, 0, 0), 10)


def test_trends():
    cat4 = [solve_access_fixed_point(WIFI, NRU, n) for n in range(5, 31, 5)]
    tuned = [optimal_initial_window(WIFI, NRU, n).coexistence.state for n in range(5, 31, 5)]
    for states in (cat4, tuned):
        assert all(a.tau_w > b.tau_w for a, b in zip(states, states[1:]))
        assert all(a.tau_l > b.tau_l for a, b in zip(states, states[1:]))

    assert all(t.tau_l < c.tau_l for t, c in zip(tuned, cat4))


def test_optimal_window():
    tuning = optimal_initial_window(WIFI, NRU, 10)
    assert not tuning.bounded
    assert abs(tuning.imbalance) < 0.01
    assert 16 < tuning.window < 2**16
    assert tuning.rounded == round(tuning.window)
    assert tuning.in_class in LBT_CLASSES[3].windows
    r_gnb, r_wifi = tuning.coexistence.ratios
    assert r_gnb == pytest.approx(r_wifi, rel=0.01)

    # A longer occupancy needs a larger window to give the same airtime
    longer = optimal_initial_window(WIFI, NRU.with_mcot(10e-3), 10)
    assert longer.window > tuning.window

    # Equal airtime out of reach within the searched range
    bounded = optimal_initial_window(WIFI, NRU, 10, window_range=(1, 8))
    assert bounded.bounded
    assert bounded.window == 8
    assert bounded.imbalance > 0


def test_coexistence():
    coexistence = solve_coexistence(WIFI, NRU, 10)
    state, slots = coexistence.state, coexistence.slots
    assert coexistence.ratios == airtime_ratios(state, slots, 10)
    assert coexistence.access_factor == pytest.approx(state.gnb_success(10) / slots.t_slot)
    assert coexistence.access_factor > 0
    assert slots.t_slot > WIFI.slot
    assert state.wifi_success(10) == pytest.approx(state.tau_w * (1 - state.tau_w) ** 9 * (1 - state.tau_l))
