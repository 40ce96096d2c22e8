"""
3GPP throughput fairness: NR-U must not hurt a WiFi network more than another WiFi network carrying the same load would.

The replacement network ("virtual" WiFi) has one node per NR user, the same access parameters as the real WiFi
network, and a mean payload tuned so its saturation throughput equals the NR rate. Merging it with the real network
gives a hybrid network whose throughput share for the real nodes is what fairness compares against.
"""

import dataclasses
import logging
import math

from scipy.optimize import brentq

from nru_coexist import ConvergenceError, InfeasibleError, ParameterError
from nru_coexist.coexistence import AccessState, Coexistence, series_access_probability, SlotBreakdown
from nru_coexist.params import WifiParams

LOG = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class WifiNetwork:
    """Saturated WiFi-only network of 'n_nodes' identical nodes"""

    n_nodes: int
    tau: float
    p: float
    P_tr: float
    P_s: float

    def overhead(self, wifi: WifiParams):
        """Mean non-payload time spent per successful transmission, times P_tr * P_s"""
        return (1.0 - self.P_tr) * wifi.slot + self.P_tr * (1.0 - self.P_s) * wifi.collision_time + wifi.handshake_time * self.P_tr * self.P_s

    def rate(self, wifi: WifiParams, payload):
        """Aggregate saturation throughput (bits/s) when every node sends 'payload' bits on average"""
        if not self.P_tr:
            return 0.0

        success = self.P_tr * self.P_s
        mean_slot = (1.0 - self.P_tr) * wifi.slot + success * wifi.success_time(payload) + self.P_tr * (1.0 - self.P_s) * wifi.collision_time
        return success * payload / mean_slot


def solve_wifi_network(wifi: WifiParams, n_nodes, tolerance=1e-10) -> WifiNetwork:
    if n_nodes < 0 or int(n_nodes) != n_nodes:
        msg = "Number of nodes must be a non-negative integer, got %s" % n_nodes
        raise ParameterError(msg)

    if n_nodes == 0:
        return WifiNetwork(0, 0.0, 0.0, 0.0, 1.0)

    def collision(tau):
        return 1.0 - (1.0 - tau) ** (n_nodes - 1)

    def residual(tau):
        return series_access_probability(collision(tau), wifi.window, wifi.max_stage) - tau

    hi = 2.0 / (wifi.window + 1.0)
    tau = hi if residual(hi) >= 0 else brentq(residual, 0.0, hi, xtol=1e-15, maxiter=500)
    worst = abs(residual(tau))
    if not worst < tolerance:
        msg = "WiFi network fixed point did not converge for %s nodes (residual %.3g)" % (n_nodes, worst)
        raise ConvergenceError(msg, residuals={"wifi-access": worst})

    p_tr = 1.0 - (1.0 - tau) ** n_nodes
    p_s = n_nodes * tau * (1.0 - tau) ** (n_nodes - 1) / p_tr
    return WifiNetwork(n_nodes, tau, collision(tau), p_tr, p_s)


def wifi_throughput(state: AccessState, slots: SlotBreakdown, n_wifi, payload_mean):
    """R_k^W: throughput (bits/s) of the whole WiFi network while coexisting with the gNB"""
    return n_wifi * state.wifi_success(n_wifi) * payload_mean / slots.t_slot


@dataclasses.dataclass(frozen=True)
class VirtualWifiSystem:
    """WiFi network standing in for the NR users, carrying the NR rate"""

    network: WifiNetwork
    payload_mean_virtual: float
    nr_rate: float
    T_s_v: float
    T_c_v: float

    @property
    def n_users(self):
        return self.network.n_nodes

    @property
    def tau_v(self):
        return self.network.tau

    @property
    def p_v(self):
        return self.network.p

    @property
    def P_tr_v(self):
        return self.network.P_tr

    @property
    def P_s_v(self):
        return self.network.P_s


def virtual_payload(nr_rate_total, wifi: WifiParams, n_users) -> VirtualWifiSystem:
    """
    Parameters
    ----------
    nr_rate_total : float
        DL + UL NR rate to replicate (bits/s)
    wifi : WifiParams
        Access parameters shared with the virtual network
    n_users : int
        Number of NR users N_u (one virtual node each)

    Returns
    -------
    VirtualWifiSystem
        Virtual network with the mean payload making its throughput equal 'nr_rate_total'
    """
    if nr_rate_total < 0:
        msg = "NR rate must be >= 0, got %s" % nr_rate_total
        raise ParameterError(msg)

    if nr_rate_total >= wifi.rate:
        msg = "No WiFi network can carry %.6g bits/s, PHY rate is %.6g" % (nr_rate_total, wifi.rate)
        raise InfeasibleError(msg, binding=["wifi-rate"])

    network = solve_wifi_network(wifi, n_users)
    if not n_users:
        if nr_rate_total > 0:
            msg = "Virtual WiFi network without nodes cannot carry %.6g bits/s" % nr_rate_total
            raise ParameterError(msg)

        payload = 0.0

    else:
        success = network.P_tr * network.P_s
        payload = network.overhead(wifi) * wifi.rate * nr_rate_total / (success * (wifi.rate - nr_rate_total))

    return VirtualWifiSystem(network, payload, nr_rate_total, wifi.success_time(payload), wifi.collision_time)


@dataclasses.dataclass(frozen=True)
class HybridNetwork:
    """Real WiFi nodes and virtual nodes contending as a single WiFi network"""

    network: WifiNetwork
    n_wifi: int
    n_users: int
    payload_mean_con: float
    T_s_con: float
    T_c_con: float
    R_con: float

    @property
    def tau_con(self):
        return self.network.tau

    @property
    def p_con(self):
        return self.network.p

    @property
    def P_tr_con(self):
        return self.network.P_tr

    @property
    def P_s_con(self):
        return self.network.P_s


def hybrid_rate(wifi: WifiParams, n_wifi, virtual: VirtualWifiSystem) -> HybridNetwork:
    n_users = virtual.n_users
    n_total = n_wifi + n_users
    network = solve_wifi_network(wifi, n_total)
    payload = (n_wifi * wifi.payload + n_users * virtual.payload_mean_virtual) / n_total
    return HybridNetwork(
        network=network,
        n_wifi=n_wifi,
        n_users=n_users,
        payload_mean_con=payload,
        T_s_con=wifi.success_time(payload),
        T_c_con=wifi.collision_time,
        R_con=network.rate(wifi, payload),
    )


def wifi_rate_under_virtual(hybrid: HybridNetwork, n_wifi, n_users, payload_real, payload_virtual):
    """R_k^k': real nodes' payload-weighted share of the hybrid network throughput"""
    real = n_wifi * payload_real
    return real * hybrid.R_con / (real + n_users * payload_virtual)


@dataclasses.dataclass(frozen=True)
class FairnessThreshold:
    """
    Fairness rewritten as a floor on the NR rate: R_D + R_U >= phi * r_w / (1 + phi)

    Attributes
    ----------
    phi : float
        Threshold, finite
    rate_floor : float
        Minimum NR rate (bits/s), 0 when the constraint is vacuous
    vacuous : bool
        True when phi <= 0, i.e. any NR rate satisfies fairness
    s_k, Q, Z, Y : float
        Intermediate terms (virtual overhead per payload bit, hybrid non-payload time, WiFi time per success,
        handshake time)
    """

    phi: float
    rate_floor: float
    vacuous: bool
    s_k: float
    Q: float
    Z: float
    Y: float


def fairness_threshold(coexistence: Coexistence, n_users) -> FairnessThreshold:
    """Threshold phi for given coexisting channel, none of the terms depend on the NR rate itself"""
    wifi = coexistence.wifi
    n_wifi = coexistence.n_wifi
    y = wifi.handshake_time
    success = coexistence.state.wifi_success(n_wifi)
    if not success > 0:
        msg = "WiFi nodes never succeed (tau_l=%s), fairness cannot hold" % coexistence.state.tau_l
        raise InfeasibleError(msg, binding=["gnb-access"])

    z = coexistence.slots.t_slot / success
    if not n_users:
        return FairnessThreshold(0.0, 0.0, True, 0.0, 0.0, z, y)

    virtual = solve_wifi_network(wifi, n_users)
    s_k = virtual.overhead(wifi) * wifi.rate / (virtual.P_tr * virtual.P_s)
    merged = solve_wifi_network(wifi, n_wifi + n_users)
    merged_success = merged.P_tr * merged.P_s
    q = ((1.0 - merged.P_tr) * wifi.slot + merged.P_tr * (1.0 - merged.P_s) * wifi.collision_time) / merged_success
    phi = (wifi.rate * z - wifi.rate * (n_wifi + n_users) * (q + y) - n_wifi * wifi.payload) / (n_users * s_k)
    if not math.isfinite(phi):
        msg = "Fairness threshold is not finite for N=%s, N_u=%s" % (n_wifi, n_users)
        raise ConvergenceError(msg, residuals={"phi": phi})

    vacuous = phi <= 0
    rate_floor = 0.0 if vacuous else phi * wifi.rate / (1.0 + phi)
    if vacuous:
        LOG.debug("Fairness is vacuous for N=%s, N_u=%s (phi=%.4g)", n_wifi, n_users, phi)

    return FairnessThreshold(phi, rate_floor, vacuous, s_k, q, z, y)


@dataclasses.dataclass(frozen=True)
class FairnessCheck:
    """Direct comparison of WiFi throughput next to the gNB against next to the virtual WiFi network"""

    wifi_rate: float
    virtual_rate: float
    nr_rate: float

    @property
    def satisfied(self):
        return self.wifi_rate >= self.virtual_rate


def fairness_check(coexistence: Coexistence, n_users, nr_rate) -> FairnessCheck:
    wifi = coexistence.wifi
    n_wifi = coexistence.n_wifi
    r_w = wifi_throughput(coexistence.state, coexistence.slots, n_wifi, wifi.payload)
    virtual = virtual_payload(nr_rate, wifi, n_users)
    hybrid = hybrid_rate(wifi, n_wifi, virtual)
    r_kk = wifi_rate_under_virtual(hybrid, n_wifi, n_users, wifi.payload, virtual.payload_mean_virtual)
    return FairnessCheck(r_w, r_kk, nr_rate)
