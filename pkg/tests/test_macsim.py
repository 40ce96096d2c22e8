import numpy as np
import pytest

from nru_coexist import ParameterError
from nru_coexist.coexistence import optimal_initial_window, solve_coexistence
from nru_coexist.fairness import solve_wifi_network, wifi_throughput
from nru_coexist.macsim import (
    ECCA_BACKOFF,
    ECCA_FROZEN,
    empirical_throughputs,
    ICCA,
    MIN_HORIZON,
    NodeState,
    OUTCOMES,
    simulate,
    SimStats,
    UniformStream,
)
from nru_coexist.params import NruParams, WifiParams

WIFI = WifiParams()
NRU = NruParams()


def test_uniform_stream():
    stream = UniformStream(np.random.default_rng(1), block_size=4)
    values = [stream() for _ in range(10)]
    assert values == list(np.random.default_rng(1).random(12)[:10])


def test_node_state():
    stream = UniformStream(np.random.default_rng(2))
    node = NodeState("wifi", 16, 2)
    counters = [node.draw_counter(stream) for _ in range(2000)]
    assert min(counters) == 0
    assert max(counters) == 15

    node.transmitted(True)
    node.transmitted(True)
    node.transmitted(True)
    assert node.backoff_stage == 2
    assert node.drops == 0
    assert max(node.draw_counter(stream) for _ in range(2000)) == 63
    node.transmitted(False)
    assert (node.backoff_stage, node.attempts, node.collisions, node.successes) == (0, 4, 3, 1)

    # gNB drops its packet after colliding at the last stage
    gnb = NodeState("gnb", 16, 1)
    gnb.transmitted(True)
    gnb.transmitted(True)
    assert gnb.drops == 1
    assert gnb.backoff_stage == 0

    gnb.enter_icca(8)
    assert gnb.phase == ICCA
    assert gnb.idle_slots_to_attempt == 8
    gnb.sensed_idle(3)
    assert gnb.idle_slots_to_attempt == 5

    # Busy channel during ICCA: ECCA with a fresh counter, resumed on the next idle slot
    gnb.sensed_busy(stream)
    assert gnb.phase == ECCA_FROZEN
    assert gnb.defer_left == 0
    assert 0 <= gnb.backoff_counter <= 15
    gnb.backoff_counter = 5
    assert gnb.idle_slots_to_attempt == 5
    gnb.sensed_idle(2)
    assert gnb.phase == ECCA_BACKOFF
    assert gnb.backoff_counter == 3

    # Busy again: counter frozen, not redrawn
    gnb.sensed_busy(stream)
    assert gnb.phase == ECCA_FROZEN
    assert gnb.idle_slots_to_attempt == 3
    gnb.sensed_idle(0)
    assert gnb.phase == ECCA_FROZEN


def test_wifi_alone():
    stats = simulate(WIFI, None, 1, 10**6, seed=1)
    assert stats.tau_w == pytest.approx(2 / 17, rel=0.02)
    assert stats.p_w == 0
    assert stats.counts["wifi-collision"] == 0
    assert stats.tau_l == 0
    assert stats.airtime_ratios()[0] == 0

    stats = simulate(WIFI, None, 10, 10**6, seed=2)
    network = solve_wifi_network(WIFI, 10)
    assert stats.tau_w == pytest.approx(network.tau, rel=0.05)
    assert stats.p_w == pytest.approx(network.p, rel=0.05)


def test_gnb_alone():
    # Nobody to collide with: ICCA every time, one attempt every L + 1 slots
    stats = simulate(WIFI, NRU, 0, MIN_HORIZON, seed=3)
    assert stats.gnb_collisions == 0
    assert stats.gnb_successes == stats.gnb_attempts
    assert stats.tau_l == pytest.approx(1 / (NRU.icca_slots + 1), rel=1e-3)
    assert stats.airtime_ratios()[1] == 0


def test_coexistence_run():
    stats = simulate(WIFI, NRU, 10, 2 * MIN_HORIZON, seed=4)
    assert stats.slots == 2 * MIN_HORIZON
    assert sum(stats.counts.values()) == stats.slots
    assert set(stats.counts) == set(OUTCOMES)
    assert sum(stats.fractions().values()) == pytest.approx(1)
    assert stats.seconds["idle"] == stats.counts["idle"] * WIFI.slot
    assert stats.seconds["gnb-success"] == pytest.approx(stats.counts["gnb-success"] * NRU.occupancy_time)

    # Every gNB attempt is either a success or a cross collision
    assert stats.gnb_attempts == stats.counts["gnb-success"] + stats.counts["cross-collision"]
    assert stats.gnb_collisions == stats.counts["cross-collision"]
    assert stats.gnb_successes == stats.counts["gnb-success"]
    assert sum(stats.wifi_successes) == stats.counts["wifi-success"]
    assert len(stats.wifi_successes) == 10
    assert 0 < stats.tau_l < 1
    assert 0 < stats.tau_w < 2 / 17
    assert 0 < stats.p_l < 1

    r_gnb, r_wifi = stats.airtime_ratios()
    assert 0 < r_wifi < r_gnb < 1
    assert stats.mean_slot > WIFI.slot

    # A larger gNB window leaves more airtime to WiFi
    tuned = simulate(WIFI, NRU.with_window(256), 10, 2 * MIN_HORIZON, seed=4)
    assert tuned.tau_l < stats.tau_l
    assert tuned.airtime_ratios()[1] > r_wifi


@pytest.mark.parametrize("n_wifi", [5, 10, 20])
def test_model_agreement(n_wifi):
    coexistence = solve_coexistence(WIFI, NRU, n_wifi)
    state = coexistence.state
    stats = simulate(WIFI, NRU, n_wifi, 10**6, seed=n_wifi)
    assert stats.tau_w == pytest.approx(state.tau_w, rel=0.05)
    assert stats.tau_l == pytest.approx(state.tau_l, rel=0.05)
    assert stats.p_l == pytest.approx(state.p_l, rel=0.05)

    expected = coexistence.slots.fractions()
    fractions = stats.fractions()
    for outcome in OUTCOMES:
        assert fractions[outcome] == pytest.approx(expected[outcome], rel=0.05), outcome

    for simulated, analytic in zip(stats.airtime_ratios(), coexistence.ratios):
        assert simulated == pytest.approx(analytic, rel=0.05)

    goodput, _ = empirical_throughputs(stats, WIFI.payload)
    assert goodput == pytest.approx(wifi_throughput(state, coexistence.slots, n_wifi, WIFI.payload), rel=0.05)


def test_equal_airtime():
    tuning = optimal_initial_window(WIFI, NRU, 5)
    stats = simulate(WIFI, tuning.coexistence.nru, 5, 2 * 10**6, seed=11)
    r_gnb, r_wifi = stats.airtime_ratios()
    assert r_gnb == pytest.approx(r_wifi, rel=0.05)


def test_determinism():
    a = simulate(WIFI, NRU, 5, MIN_HORIZON, seed=7)
    b = simulate(WIFI, NRU, 5, MIN_HORIZON, seed=7)
    c = simulate(WIFI, NRU, 5, MIN_HORIZON, seed=8)
    assert a == b
    assert a != c
    assert a.seed == 7


def test_merged():
    runs = [simulate(WIFI, NRU, 5, MIN_HORIZON, seed=seed) for seed in (1, 2)]
    merged = SimStats.merged(runs)
    assert merged.slots == 2 * MIN_HORIZON
    assert merged.gnb_attempts == runs[0].gnb_attempts + runs[1].gnb_attempts
    assert merged.wifi_successes == tuple(a + b for a, b in zip(runs[0].wifi_successes, runs[1].wifi_successes))
    assert merged.total_seconds == pytest.approx(runs[0].total_seconds + runs[1].total_seconds)
    assert min(r.tau_l for r in runs) <= merged.tau_l <= max(r.tau_l for r in runs)
    assert merged.seed == 1


def test_empirical_throughputs():
    stats = simulate(WIFI, NRU, 5, MIN_HORIZON, seed=9)
    goodput, gnb_share = empirical_throughputs(stats, WIFI.payload)
    assert goodput > 0
    assert gnb_share == stats.airtime_ratios()[0]

    # Linear in the payload credited per success
    assert empirical_throughputs(stats, 2 * WIFI.payload)[0] == pytest.approx(2 * goodput)

    empty = SimStats(1, 0, dict.fromkeys(OUTCOMES, 0), dict.fromkeys(OUTCOMES, 0.0), 0, 0, (0,), 0, 0, 0, 0, 1)
    with pytest.raises(ParameterError):
        empirical_throughputs(empty, WIFI.payload)


def test_bad_inputs():
    with pytest.raises(ParameterError):
        simulate(WIFI, NRU, 5, MIN_HORIZON - 1, seed=1)

    with pytest.raises(ParameterError):
        simulate(WIFI, None, 0, MIN_HORIZON, seed=1)

    with pytest.raises(ParameterError):
        simulate(WIFI, NRU, -1, MIN_HORIZON, seed=1)

    with pytest.raises(ParameterError):
        simulate(WIFI, NRU, 2.5, MIN_HORIZON, seed=1)

    with pytest.raises(ParameterError):
        simulate(WIFI, NRU, 5, MIN_HORIZON, seed=1, algorithm="philox")
