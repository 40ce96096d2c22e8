import pytest

from nru_coexist import InfeasibleError, ParameterError
from nru_coexist.coexistence import optimal_initial_window, solve_coexistence
from nru_coexist.fairness import (
    fairness_check,
    fairness_threshold,
    hybrid_rate,
    solve_wifi_network,
    virtual_payload,
    wifi_rate_under_virtual,
    wifi_throughput,
)
from nru_coexist.params import NruParams, WifiParams

WIFI = WifiParams()
NRU = NruParams()


def test_wifi_network():
    single = solve_wifi_network(WIFI, 1)
    assert single.tau == pytest.approx(2 / 17)
    assert single.p == 0
    assert single.P_s == 1

    network = solve_wifi_network(WIFI, 10)
    assert 0 < network.tau < single.tau
    assert network.P_tr == pytest.approx(1 - (1 - network.tau) ** 10)
    assert 0 < network.rate(WIFI, WIFI.payload) < WIFI.rate

    empty = solve_wifi_network(WIFI, 0)
    assert empty.P_tr == 0
    assert empty.rate(WIFI, WIFI.payload) == 0

    # Root found by bracketing, to well within the default tolerance
    for n in (2, 5, 10, 30):
        network = solve_wifi_network(WIFI, n, tolerance=1e-13)
        assert network.p == pytest.approx(1 - (1 - network.tau) ** (n - 1))

    with pytest.raises(ParameterError):
        solve_wifi_network(WIFI, -1)


def test_virtual_payload():
    target = 5e6
    virtual = virtual_payload(target, WIFI, 10)
    assert virtual.n_users == 10
    assert virtual.payload_mean_virtual > 0
    assert virtual.network.rate(WIFI, virtual.payload_mean_virtual) == pytest.approx(target, rel=1e-9)
    assert virtual.T_s_v == pytest.approx(WIFI.success_time(virtual.payload_mean_virtual))
    assert virtual.T_c_v == WIFI.collision_time
    assert 0 < virtual.P_s_v < 1
    assert virtual.tau_v == virtual.network.tau
    assert virtual.p_v == virtual.network.p
    assert virtual.P_tr_v == virtual.network.P_tr

    # Payload grows with the rate to carry
    assert virtual_payload(10e6, WIFI, 10).payload_mean_virtual > virtual.payload_mean_virtual
    assert virtual_payload(0, WIFI, 10).payload_mean_virtual == 0
    assert virtual_payload(0, WIFI, 0).payload_mean_virtual == 0

    with pytest.raises(InfeasibleError) as exc:
        virtual_payload(WIFI.rate, WIFI, 10)
    assert exc.value.binding == ["wifi-rate"]

    with pytest.raises(ParameterError):
        virtual_payload(1e6, WIFI, 0)

    with pytest.raises(ParameterError):
        virtual_payload(-1, WIFI, 10)


def test_hybrid():
    virtual = virtual_payload(5e6, WIFI, 10)
    hybrid = hybrid_rate(WIFI, 10, virtual)
    assert hybrid.network.n_nodes == 20
    assert hybrid.R_con == pytest.approx(solve_wifi_network(WIFI, 20).rate(WIFI, hybrid.payload_mean_con))
    assert hybrid.T_s_con == pytest.approx(WIFI.success_time(hybrid.payload_mean_con))
    assert hybrid.T_c_con == WIFI.collision_time
    assert hybrid.tau_con == hybrid.network.tau
    assert hybrid.p_con == hybrid.network.p
    assert hybrid.P_tr_con == hybrid.network.P_tr
    assert hybrid.P_s_con == hybrid.network.P_s

    # Equal payloads: real nodes get half of the hybrid throughput
    same = virtual_payload(0, WIFI, 10)
    same = same.__class__(same.network, WIFI.payload, 0, WIFI.success_time(), WIFI.collision_time)
    hybrid = hybrid_rate(WIFI, 10, same)
    assert hybrid.payload_mean_con == WIFI.payload
    assert wifi_rate_under_virtual(hybrid, 10, 10, WIFI.payload, WIFI.payload) == pytest.approx(hybrid.R_con / 2)


@pytest.mark.parametrize("payload", [800, 1500, 2048])
def test_threshold(payload):
    wifi = WIFI.with_payload(payload * 8)
    coexistence = optimal_initial_window(wifi, NRU, 10).coexistence
    threshold = fairness_threshold(coexistence, 10)
    assert threshold.Y == wifi.handshake_time
    assert threshold.Z > 0
    if threshold.vacuous:
        assert threshold.phi <= 0
        assert threshold.rate_floor == 0

    else:
        assert 0 < threshold.rate_floor < wifi.rate

    # Rate floor and the direct comparison tell the same story
    for nr_rate in (1e5, 1e6, 5e6, 2e7):
        check = fairness_check(coexistence, 10, nr_rate)
        assert check.nr_rate == nr_rate
        assert check.wifi_rate == pytest.approx(wifi_throughput(coexistence.state, coexistence.slots, 10, wifi.payload))
        if abs(nr_rate - threshold.rate_floor) > 0.01 * nr_rate:
            assert check.satisfied == (nr_rate >= threshold.rate_floor)


def test_threshold_edge_cases():
    coexistence = solve_coexistence(WIFI, NRU, 10)
    vacuous = fairness_threshold(coexistence, 0)
    assert vacuous.vacuous
    assert vacuous.rate_floor == 0

    # More NR rate means a heavier virtual network, and less WiFi throughput next to it
    low = fairness_check(coexistence, 10, 1e6)
    high = fairness_check(coexistence, 10, 2e7)
    assert high.virtual_rate < low.virtual_rate
    assert high.wifi_rate == low.wifi_rate
