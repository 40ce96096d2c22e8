"""
Analytical model of one gNB (Category-4 LBT) sharing a channel with N saturated WiFi (DCF) nodes.

Both contenders follow a Bianchi-style renewal model: access probability tau as a function of the conditional
collision probability p, and p as a function of everybody else's tau. The coupled fixed point gives the per-slot
event probabilities, the mean slot duration, and the successful airtime ratios used to tune the gNB window.
"""

import dataclasses
import logging
import math
from typing import Optional

from scipy.optimize import brentq

from nru_coexist import ConvergenceError, ParameterError
from nru_coexist.params import NruParams, WifiParams

LOG = logging.getLogger(__name__)

# Distance to p = 1/2 under which the WiFi closed form is evaluated through its geometric sum (removable 0/0)
HALF_SPAN = 1e-6

# As-published gNB expression is 0/0 at p = 0: clamp, then evaluate the limit at LIMIT_EPSILON
P_CLAMP = 1e-12
LIMIT_EPSILON = 1e-9

WINDOW_RANGE = (1.0, 2.0**16)


def geometric_sum(x, n):
    """sum(x**t for t in range(n))"""
    if n <= 0:
        return 0.0

    if abs(1.0 - x) < 1e-12:
        return float(n)

    return (1.0 - x**n) / (1.0 - x)


def wifi_access_probability(p, window, max_stage):
    """
    Per-node WiFi access probability given conditional collision probability p

    tau = 2(1-2p) / ((1-2p)(W+1) + pW(1-(2p)^m))

    Parameters
    ----------
    p : float
        Conditional collision probability, in [0, 1]
    window : float
        Initial contention window W
    max_stage : int
        Maximum backoff stage m

    Returns
    -------
    float
    """
    x = 1.0 - 2.0 * p
    if abs(x) < HALF_SPAN:
        return series_access_probability(p, window, max_stage)

    return 2.0 * x / (x * (window + 1.0) + p * window * (1.0 - (2.0 * p) ** max_stage))


def series_access_probability(p, window, max_stage):
    """Same quantity written as 2 / (1 + W + pW * sum((2p)^t, t < m)), regular at p = 1/2"""
    return 2.0 / (1.0 + window + p * window * geometric_sum(2.0 * p, max_stage))


def gnb_access_probability(p, nru: NruParams):
    """
    gNB access probability given its conditional collision probability p (busy probability of a decision slot)

    The 'renewal' form (default) counts decision slots per attempt of the procedure `macsim` runs:
    the gNB starts every attempt in ICCA, which needs L idle slots (the first busy one sends it to ECCA),
    the ECCA counter drawn at stage i is uniform in [0, 2^i W - 1] and only idle slots decrement it,
    a collision moves to the next stage, a collision at stage m-1 drops the packet. With the stage distribution
    over attempts proportional to p^i (i < m):

        1 / tau = sum((1-p)^j, j < L) + 1 + (1 - (1-p)^L) / (2(1-p)) * (W * sum((2p)^i) / sum(p^i) - 1)

    The 'as-published' form is

        2p(1-2p)[1+(1-p)^L] / ([2-2(1-p)^L](1-3p+2p^2) + p*H1)
        H1 = (2W+1)(1-2p) + 2pW[1-2(2p)^(m-1)]

    which has a pole close to p = 0.45 once W is large, a value outside of [0, 1] raises ConvergenceError.
    The 'geometric' form drops the stray factor 2 in H1 and divides through by p(1-2p), leaving a ratio of positive
    geometric sums with no singular point in [0, 1].
    """
    window = nru.window
    stages = nru.max_stage
    q = 1.0 - p
    idle_l = q**nru.icca_slots
    if nru.access_form == "renewal":
        if q <= 0:
            return 0.0

        spread = window * geometric_sum(2.0 * p, stages) / geometric_sum(p, stages) - 1.0
        return 1.0 / (geometric_sum(q, nru.icca_slots) + 1.0 + (1.0 - idle_l) * spread / (2.0 * q))

    if nru.access_form == "geometric":
        icca = 2.0 * q * geometric_sum(q, nru.icca_slots)
        ecca = 2.0 * window + 1.0 + 2.0 * p * window * geometric_sum(2.0 * p, stages - 1)
        return 2.0 * (1.0 + idle_l) / (icca + ecca)

    p = max(p, P_CLAMP)
    if p < LIMIT_EPSILON:
        p = LIMIT_EPSILON
        q = 1.0 - p
        idle_l = q**nru.icca_slots

    x = 1.0 - 2.0 * p
    h1 = (2.0 * window + 1.0) * x + 2.0 * p * window * (1.0 - 2.0 * (2.0 * p) ** (stages - 1))
    denominator = (2.0 - 2.0 * idle_l) * (1.0 - 3.0 * p + 2.0 * p * p) + p * h1
    tau = 2.0 * p * x * (1.0 + idle_l) / denominator if denominator else math.inf
    if not 0.0 <= tau <= 1.0:
        msg = "As-published gNB access form leaves [0, 1] at p_l=%.6g (tau_l=%.6g, pole of its denominator near W=%s)" % (p, tau, window)
        raise ConvergenceError(msg, residuals={"gnb-access": tau})

    return tau


@dataclasses.dataclass(frozen=True)
class AccessState:
    """Solved coupled fixed point, plus the per-slot transmission/success probabilities"""

    tau_w: float
    tau_l: float
    p_w: float
    p_l: float
    P_tr_w: float = float("nan")
    P_s_w: float = float("nan")
    P_tr_l: float = float("nan")
    P_s_l: float = float("nan")
    iterations: int = 0

    def residuals(self, wifi: WifiParams, nru: Optional[NruParams], n_wifi):
        """Residual of each of the four coupled equations at this state"""
        tau_l = gnb_access_probability(self.p_l, nru) if nru else 0.0
        return {
            "wifi-access": self.tau_w - wifi_access_probability(self.p_w, wifi.window, wifi.max_stage),
            "wifi-collision": self.p_w - (1.0 - (1.0 - self.tau_w) ** (n_wifi - 1) * (1.0 - self.tau_l)),
            "gnb-access": self.tau_l - tau_l,
            "gnb-collision": self.p_l - (1.0 - (1.0 - self.tau_w) ** n_wifi),
        }

    def wifi_success(self, n_wifi):
        """Probability that a given WiFi node transmits successfully in a slot"""
        return self.tau_w * (1.0 - self.tau_w) ** (n_wifi - 1) * (1.0 - self.tau_l)

    def gnb_success(self, n_wifi):
        """Probability that the gNB transmits successfully in a slot"""
        return self.tau_l * (1.0 - self.tau_w) ** n_wifi


def tx_probabilities(state: AccessState, n_wifi) -> AccessState:
    """Fill in P_tr/P_s fields of 'state', P_s_w is exactly 1 for a single node, and by continuity when nobody transmits"""
    if not (0.0 <= state.tau_w <= 1.0 and 0.0 <= state.tau_l <= 1.0):
        msg = "Access probabilities must be in [0, 1], got tau_w=%s tau_l=%s" % (state.tau_w, state.tau_l)
        raise ParameterError(msg)

    p_tr_w = 1.0 - (1.0 - state.tau_w) ** n_wifi
    if n_wifi == 1:
        p_s_w = 1.0

    elif p_tr_w > 0:
        p_s_w = n_wifi * state.tau_w * (1.0 - state.tau_w) ** (n_wifi - 1) / p_tr_w

    else:
        p_s_w = 1.0

    return dataclasses.replace(state, P_tr_w=p_tr_w, P_s_w=p_s_w, P_tr_l=state.tau_l, P_s_l=1.0)


def _check_node_count(n_wifi):
    if n_wifi < 1 or int(n_wifi) != n_wifi:
        msg = "Number of WiFi nodes must be an integer >= 1, got %s" % n_wifi
        raise ParameterError(msg)


def solve_access_fixed_point(wifi: WifiParams, nru: Optional[NruParams], n_wifi, tolerance=1e-10, max_iterations=100000, damping=0.5):
    """
    Parameters
    ----------
    wifi : WifiParams
        WiFi parameters
    nru : NruParams | None
        gNB parameters, None for a silent gNB (tau_l pinned to 0)
    n_wifi : int
        Number of WiFi nodes N_k
    tolerance : float
        Max residual allowed in any of the four equations
    max_iterations : int
        Cap on damped substitution steps
    damping : float
        Weight of the previous iterate

    Returns
    -------
    AccessState
        Solved state, with transmission/success probabilities filled in
    """
    _check_node_count(n_wifi)
    p_w = p_l = 0.0
    delta = checkpoint = math.inf
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        tau_w = wifi_access_probability(p_w, wifi.window, wifi.max_stage)
        tau_l = gnb_access_probability(p_l, nru) if nru else 0.0
        new_p_w = _clipped(1.0 - (1.0 - tau_w) ** (n_wifi - 1) * (1.0 - tau_l))
        new_p_l = _clipped(1.0 - (1.0 - tau_w) ** n_wifi)
        delta = max(abs(new_p_w - p_w), abs(new_p_l - p_l))
        if delta < tolerance:
            break

        p_w = damping * p_w + (1.0 - damping) * new_p_w
        p_l = damping * p_l + (1.0 - damping) * new_p_l
        if iterations % 256 == 0:
            if delta > 0.5 * checkpoint:
                LOG.debug("Damped substitution stalled at delta=%.3g after %s iterations, switching to bracketing", delta, iterations)
                break

            checkpoint = delta

    if delta < tolerance:
        state = AccessState(tau_w, tau_l, p_w, p_l, iterations=iterations)

    else:
        state = _solve_scalarized(wifi, nru, n_wifi, iterations)

    residuals = state.residuals(wifi, nru, n_wifi)
    worst = max(abs(x) for x in residuals.values())
    if not worst < tolerance:
        msg = "Access fixed point did not converge for N=%s (worst residual %.3g)" % (n_wifi, worst)
        raise ConvergenceError(msg, residuals=residuals, iterations=state.iterations)

    LOG.debug("Access fixed point for N=%s solved in %s iterations", n_wifi, state.iterations)
    return tx_probabilities(state, n_wifi)


def _clipped(p):
    return min(max(p, 0.0), 1.0)


def _solve_scalarized(wifi, nru, n_wifi, iterations):
    """Fixed point written as a decreasing function of tau_w alone, bracketed by [0, 2/(W+1)]"""
    calls = [0]

    def coupled(tau_w):
        p_l = 1.0 - (1.0 - tau_w) ** n_wifi
        tau_l = gnb_access_probability(p_l, nru) if nru else 0.0
        p_w = _clipped(1.0 - (1.0 - tau_w) ** (n_wifi - 1) * (1.0 - tau_l))
        return p_w, p_l, tau_l

    def residual(tau_w):
        calls[0] += 1
        p_w, _, _ = coupled(tau_w)
        return wifi_access_probability(p_w, wifi.window, wifi.max_stage) - tau_w

    hi = 2.0 / (wifi.window + 1.0)
    if residual(hi) >= 0:
        tau_w = hi

    else:
        tau_w = brentq(residual, 0.0, hi, xtol=1e-15, maxiter=500)

    p_w, p_l, tau_l = coupled(tau_w)
    tau_w = wifi_access_probability(p_w, wifi.window, wifi.max_stage)
    return AccessState(tau_w, tau_l, p_w, p_l, iterations=iterations + calls[0])


@dataclasses.dataclass(frozen=True)
class SlotBreakdown:
    """Weighted mean duration of each of the five slot outcomes, and the raw event durations"""

    t_idle: float
    t_succ_wifi: float
    t_succ_gnb: float
    t_coll_wifi: float
    t_coll_cross: float
    T_s_w: float
    T_c_w: float
    T_s_l: float
    T_c_l: float
    T_lw: float

    @property
    def t_slot(self):
        return self.t_idle + self.t_succ_wifi + self.t_succ_gnb + self.t_coll_wifi + self.t_coll_cross

    def fractions(self):
        """Share of time spent in each outcome class"""
        total = self.t_slot
        return {
            "idle": self.t_idle / total,
            "wifi-success": self.t_succ_wifi / total,
            "gnb-success": self.t_succ_gnb / total,
            "wifi-collision": self.t_coll_wifi / total,
            "cross-collision": self.t_coll_cross / total,
        }


def slot_breakdown(state: AccessState, wifi: WifiParams, nru: Optional[NruParams], n_wifi) -> SlotBreakdown:
    t_s_w = wifi.success_time()
    t_c_w = wifi.collision_time
    t_s_l = t_c_l = nru.occupancy_time if nru else 0.0
    t_lw = max(t_c_w, t_c_l)
    tau_w, tau_l = state.tau_w, state.tau_l
    none_w = (1.0 - tau_w) ** n_wifi
    one_w = n_wifi * tau_w * (1.0 - tau_w) ** (n_wifi - 1)
    return SlotBreakdown(
        t_idle=(1.0 - tau_l) * none_w * wifi.slot,
        t_succ_wifi=one_w * (1.0 - tau_l) * t_s_w,
        t_succ_gnb=tau_l * none_w * t_s_l,
        t_coll_wifi=max(0.0, 1.0 - none_w - one_w) * (1.0 - tau_l) * t_c_w,
        t_coll_cross=tau_l * (1.0 - none_w) * t_lw,
        T_s_w=t_s_w,
        T_c_w=t_c_w,
        T_s_l=t_s_l,
        T_c_l=t_c_l,
        T_lw=t_lw,
    )


def airtime_ratios(state: AccessState, slots: SlotBreakdown, n_wifi):
    """
    Returns
    -------
    (float, float)
        Successful airtime ratio of the gNB, and of one WiFi node
    """
    t_slot = slots.t_slot
    r_gnb = state.P_s_l * state.P_tr_l * (1.0 - state.P_tr_w) * slots.T_s_l / t_slot
    r_wifi = state.P_s_w * state.P_tr_w * (1.0 - state.P_tr_l) * slots.T_s_w / (t_slot * n_wifi)
    return r_gnb, r_wifi


@dataclasses.dataclass(frozen=True)
class Coexistence:
    """Everything the analytical model says about one channel"""

    wifi: WifiParams
    nru: Optional[NruParams]
    n_wifi: int
    state: AccessState
    slots: SlotBreakdown

    @property
    def ratios(self):
        return airtime_ratios(self.state, self.slots, self.n_wifi)

    @property
    def access_factor(self):
        """p_k: rate (1/s) at which the gNB wins the channel without collision"""
        return self.state.gnb_success(self.n_wifi) / self.slots.t_slot


def solve_coexistence(wifi: WifiParams, nru: Optional[NruParams], n_wifi, **solver_options) -> Coexistence:
    state = solve_access_fixed_point(wifi, nru, n_wifi, **solver_options)
    return Coexistence(wifi, nru, n_wifi, state, slot_breakdown(state, wifi, nru, n_wifi))


@dataclasses.dataclass(frozen=True)
class WindowTuning:
    """
    Attributes
    ----------
    window : float
        Real-valued fairness window W_l*
    rounded : int
        Nearest integer to 'window'
    in_class : int
        Nearest admissible window of the configured priority class
    bounded : bool
        True if equal airtime is unattainable in the searched range, 'window' is then the range boundary
    imbalance : float
        (r_gnb - r_wifi) / r_wifi at 'window'
    coexistence : Coexistence
        Solved model at 'window'
    """

    window: float
    rounded: int
    in_class: int
    bounded: bool
    imbalance: float
    coexistence: Coexistence


def optimal_initial_window(wifi: WifiParams, nru: NruParams, n_wifi, window_range=WINDOW_RANGE, **solver_options) -> WindowTuning:
    """Initial gNB contention window giving the gNB the same successful airtime as one WiFi node"""
    _check_node_count(n_wifi)

    def solved(window):
        return solve_coexistence(wifi, nru.with_window(window), n_wifi, **solver_options)

    def log_imbalance(window):
        r_gnb, r_wifi = solved(window).ratios
        return math.log(r_gnb) - math.log(r_wifi)

    lo, hi = window_range
    bounded = False
    if log_imbalance(hi) > 0:
        window, bounded = hi, True

    elif log_imbalance(lo) < 0:
        window, bounded = lo, True

    else:
        window = brentq(log_imbalance, lo, hi, xtol=1e-10, rtol=1e-13, maxiter=200)

    coexistence = solved(window)
    r_gnb, r_wifi = coexistence.ratios
    imbalance = (r_gnb - r_wifi) / r_wifi
    if bounded:
        LOG.warning("Equal airtime unattainable for N=%s with window in %s, imbalance at boundary: %.3g", n_wifi, window_range, imbalance)

    return WindowTuning(
        window=window,
        rounded=max(1, int(round(window))),
        in_class=nru.lbt_class.nearest_window(window),
        bounded=bounded,
        imbalance=imbalance,
        coexistence=coexistence,
    )
