"""Reference allocations: equal time and/or equal power, each optionally completed by one optimal block"""

import numpy as np

from nru_coexist.allocator import Allocation, downlink_power, release_idle_power, Scenario, time_allocation, uplink_power


def uniform_times(scenario: Scenario):
    """MCOT split evenly over all DL and UL links of each channel"""
    share = scenario.mcot / (scenario.D + scenario.U)
    return np.full((scenario.D, scenario.K), share), np.full((scenario.U, scenario.K), share)


def equal_powers(t_d, scenario: Scenario):
    """
    DL links at half their instantaneous cap, scaled down to the total DL budget if needed.
    UL budget split evenly over channels.
    """
    s = scenario
    q_d = np.asarray(t_d) / s.mcot * 0.5 * s.p_dk_max
    total = q_d.sum()
    if total > s.p_gnb_max:
        q_d = q_d * (s.p_gnb_max / total)

    q_u = np.full((s.U, s.K), s.p_avg / s.K)
    return q_d, q_u


def baseline_etep(scenario: Scenario) -> Allocation:
    """Equal time, equal power"""
    t_d, t_u = uniform_times(scenario)
    q_d, q_u = equal_powers(t_d, scenario)
    return Allocation(t_d, t_u, q_d, q_u)


def baseline_etop(scenario: Scenario) -> Allocation:
    """Equal time, optimal power"""
    alpha = np.zeros(scenario.K)
    t_d, t_u = uniform_times(scenario)
    q_u, _ = uplink_power(t_u, scenario, alpha)
    q_d, _, _ = downlink_power(t_d, scenario, alpha)
    return Allocation(t_d, t_u, q_d, q_u)


def baseline_otep(scenario: Scenario) -> Allocation:
    """Optimal time for the equal-power allocation"""
    t_d, _ = uniform_times(scenario)
    q_d, q_u = equal_powers(t_d, scenario)
    t_d, t_u, _ = time_allocation(q_d, q_u, scenario, np.zeros(scenario.K))
    return Allocation(t_d, t_u, q_d, release_idle_power(t_u, q_u))


BASELINES = {
    "etep": baseline_etep,
    "etop": baseline_etop,
    "otep": baseline_otep,
}
