"""
Joint DL/UL time and power allocation within one gNB-initiated MCOT, across K unlicensed channels.

The problem is jointly concave in (t, q). It is solved by alternating exact block maximizations: UL power given time
(water-filling with per-channel levels), then time and DL power together given UL power (the DL caps tie both).
Each alternation ends with a time step given all powers (one W0-based SNR level per channel, bracketed on the
time-budget multiplier beta). A projected subgradient step on the per-channel fairness multipliers alpha runs
around that alternation.
"""

import dataclasses
import logging
import math
from typing import List, Optional

import numpy as np
import runez
from scipy.optimize import brentq

from nru_coexist import ConvergenceError, InfeasibleError, ParameterError
from nru_coexist.kernels import h_func, inverse_h, link_rate, LN2, snr_coefficient

LOG = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True, eq=False)
class Scenario:
    """
    Attributes
    ----------
    bandwidth, access, rate_floor : numpy.ndarray
        Per-channel B_k (Hz), gNB access factor p_k (1/s) and fairness rate floor (bits/s), shape (K,)
    gain_d, gain_u : numpy.ndarray
        Power gains of DL users (D, K) and UL users (U, K)
    sigma2 : float
        Noise power (W)
    mcot : float
        Maximum channel occupancy time (s)
    p_avg : float
        Average UL power budget per UE (W)
    p_gnb_max : float
        Total DL power budget (W)
    p_dk_max : float | numpy.ndarray
        Per-link instantaneous DL power cap (W), scalar or (D, K)
    n_wifi : tuple
        WiFi nodes per channel, informational
    """

    bandwidth: np.ndarray
    access: np.ndarray
    rate_floor: np.ndarray
    gain_d: np.ndarray
    gain_u: np.ndarray
    sigma2: float
    mcot: float
    p_avg: float
    p_gnb_max: float
    p_dk_max: np.ndarray
    n_wifi: tuple = ()

    def __post_init__(self):
        for name in ("bandwidth", "access", "rate_floor", "gain_d", "gain_u", "p_dk_max"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

        k = self.bandwidth.shape[0]
        object.__setattr__(self, "p_dk_max", np.broadcast_to(self.p_dk_max, (self.gain_d.shape[0], k)).copy())
        if self.access.shape != (k,) or self.rate_floor.shape != (k,):
            msg = "Per-channel arrays must all have %s entries" % k
            raise ParameterError(msg)

        if self.gain_d.ndim != 2 or self.gain_u.ndim != 2 or self.gain_d.shape[1] != k or self.gain_u.shape[1] != k:
            msg = "Gains must be (users, %s) arrays, got %s and %s" % (k, self.gain_d.shape, self.gain_u.shape)
            raise ParameterError(msg)

        if not self.D + self.U:
            msg = "Scenario needs at least one DL or UL user"
            raise ParameterError(msg)

        positives = [self.bandwidth, self.access, self.gain_d, self.gain_u, self.p_dk_max]
        scalars = [self.sigma2, self.mcot, self.p_avg, self.p_gnb_max]
        if any(np.any(x <= 0) for x in positives) or any(not x > 0 for x in scalars) or np.any(self.rate_floor < 0):
            msg = "Bandwidths, access factors, gains, powers, noise and MCOT must be > 0, rate floors >= 0"
            raise ParameterError(msg)

    @property
    def K(self):
        return self.bandwidth.shape[0]

    @property
    def D(self):
        return self.gain_d.shape[0]

    @property
    def U(self):
        return self.gain_u.shape[0]

    @property
    def coef_d(self):
        return snr_coefficient(self.gain_d, self.sigma2, self.mcot)

    @property
    def coef_u(self):
        return snr_coefficient(self.gain_u, self.sigma2, self.mcot)

    def level_weight(self, alpha):
        """(1 + alpha_k) B_k p_k / ln2, per channel"""
        return (1.0 + np.asarray(alpha, dtype=float)) * self.bandwidth * self.access / LN2

    def restricted(self, channel):
        """Same users and budgets, but only 'channel' available"""
        sl = slice(channel, channel + 1)
        return dataclasses.replace(
            self,
            bandwidth=self.bandwidth[sl],
            access=self.access[sl],
            rate_floor=self.rate_floor[sl],
            gain_d=self.gain_d[:, sl],
            gain_u=self.gain_u[:, sl],
            p_dk_max=self.p_dk_max[:, sl],
            n_wifi=self.n_wifi[sl] if self.n_wifi else (),
        )


@dataclasses.dataclass(frozen=True, eq=False)
class Allocation:
    """Times (s) and energy-normalized powers (W), (D, K) for DL and (U, K) for UL"""

    t_d: np.ndarray
    t_u: np.ndarray
    q_d: np.ndarray
    q_u: np.ndarray

    def rates(self, scenario: Scenario):
        """Per-link DL and UL rates (bits/s)"""
        s = scenario
        r_d = link_rate(self.t_d, self.q_d, s.gain_d, s.sigma2, s.bandwidth, s.access, s.mcot)
        r_u = link_rate(self.t_u, self.q_u, s.gain_u, s.sigma2, s.bandwidth, s.access, s.mcot)
        return np.atleast_2d(r_d), np.atleast_2d(r_u)

    def channel_rates(self, scenario: Scenario):
        r_d, r_u = self.rates(scenario)
        return r_d.sum(axis=0) + r_u.sum(axis=0)

    def objective(self, scenario: Scenario):
        """Total NR throughput (bits/s)"""
        return float(self.channel_rates(scenario).sum())

    def lagrangian(self, scenario: Scenario, alpha):
        return float(((1.0 + np.asarray(alpha)) * self.channel_rates(scenario)).sum())

    def direction_rates(self, scenario: Scenario):
        """(total DL rate, total UL rate)"""
        r_d, r_u = self.rates(scenario)
        return float(r_d.sum()), float(r_u.sum())

    def instantaneous_power_d(self, scenario: Scenario):
        """p = q * MCOT / t where t > 0"""
        return np.where(self.t_d > 0, self.q_d * scenario.mcot / np.where(self.t_d > 0, self.t_d, 1.0), 0.0)

    def violations(self, scenario: Scenario):
        """Relative violation of each constraint family, 0 when satisfied"""
        s = scenario
        used = self.t_d.sum(axis=0) + self.t_u.sum(axis=0)
        cap = self.t_d * s.p_dk_max / s.mcot
        floors = s.rate_floor
        rates = self.channel_rates(s)
        result = {
            "mcot": float(np.max(np.abs(used - s.mcot)) / s.mcot),
            "p-dk-max": float(np.max((self.q_d - cap) / s.p_dk_max, initial=0.0)),
            "p-gnb-max": max(0.0, (float(self.q_d.sum()) - s.p_gnb_max) / s.p_gnb_max),
            "p-avg": max(0.0, (float(self.q_u.sum()) / max(s.U, 1) - s.p_avg) / s.p_avg) if s.U else 0.0,
            "rate-floor": float(np.max(np.where(floors > 0, (floors - rates) / np.where(floors > 0, floors, 1.0), 0.0), initial=0.0)),
            "negative": float(max(0.0, -min(self.t_d.min(initial=0), self.t_u.min(initial=0), self.q_d.min(initial=0), self.q_u.min(initial=0)))),
        }
        return {k: max(0.0, v) for k, v in result.items()}


@dataclasses.dataclass
class StepSchedule:
    """Diminishing step s(t) = initial / t: not summable, square summable"""

    initial: float

    def __call__(self, iteration):
        return self.initial / max(1, iteration)


@dataclasses.dataclass
class DualState:
    alpha: np.ndarray
    beta: np.ndarray
    theta: float = 0.0
    gamma: float = 0.0
    xi: Optional[np.ndarray] = None
    iteration: int = 0
    alpha_step: StepSchedule = dataclasses.field(default_factory=lambda: StepSchedule(1.0))

    @classmethod
    def initial(cls, scenario: Scenario, alpha_step=1.0):
        floor = float(np.max(scenario.rate_floor, initial=0.0))
        return cls(
            alpha=np.zeros(scenario.K),
            beta=np.zeros(scenario.K),
            xi=np.zeros((scenario.D, scenario.K)),
            alpha_step=StepSchedule(alpha_step / floor if floor > 0 else alpha_step),
        )

    def update_alpha(self, channel_rates, rate_floor):
        """Projected subgradient step on the fairness multipliers"""
        self.iteration += 1
        step = self.alpha_step(self.iteration)
        self.alpha = np.maximum(0.0, self.alpha - step * (np.asarray(channel_rates) - rate_floor))
        return self.alpha


def _channel_time(cq_d, floor_d, cq_u, scale, mcot, channel):
    """Times for the links of one channel, and the time-budget multiplier beta"""

    def times(beta):
        x = inverse_h(beta / scale)
        t_d = np.where(cq_d > 0, np.maximum(cq_d / x, floor_d), 0.0)
        t_u = np.where(cq_u > 0, cq_u / x, 0.0)
        return t_d, t_u

    def excess(beta):
        t_d, t_u = times(beta)
        return (t_d.sum() + t_u.sum()) / mcot - 1.0

    floor_total = floor_d.sum()
    if floor_total >= mcot * (1.0 - 1e-12):
        if floor_total > mcot * (1.0 + 1e-9):
            msg = "Channel %s: DL powers need %.6g s at their caps, more than MCOT %.6g s" % (channel, floor_total, mcot)
            raise InfeasibleError(msg, binding=["mcot", "p-dk-max"])

        return floor_d * mcot / floor_total, np.zeros_like(cq_u), math.inf

    lo = hi = scale * h_func(1.0)
    for _ in range(2000):
        if excess(lo) > 0:
            break

        lo /= 2.0

    for _ in range(2000):
        if excess(hi) < 0:
            break

        hi *= 2.0

    if not (excess(lo) > 0 > excess(hi)):
        msg = "Channel %s: could not bracket the time-budget multiplier (beta in [%.6g, %.6g])" % (channel, lo, hi)
        raise ConvergenceError(msg, residuals={"lo": excess(lo), "hi": excess(hi)})

    beta = brentq(excess, lo, hi, xtol=1e-300, rtol=1e-13, maxiter=500)
    t_d, t_u = times(beta)
    gap = abs(t_d.sum() + t_u.sum() - mcot) / mcot
    if gap > 1e-8:
        msg = "Channel %s: time budget met only to %.3g relative" % (channel, gap)
        raise ConvergenceError(msg, residuals={"mcot": gap})

    return t_d, t_u, beta


def release_idle_power(t, q):
    """Powers with q = 0 wherever t = 0: a link squeezed out of the channel gives its power back"""
    t = np.asarray(t, dtype=float)
    return np.where(t > 0, np.asarray(q, dtype=float), 0.0)


def time_allocation(q_d, q_u, scenario: Scenario, alpha):
    """
    Optimal times for fixed powers

    Parameters
    ----------
    q_d, q_u : numpy.ndarray
        Energy-normalized DL (D, K) and UL (U, K) powers
    scenario : Scenario
        Scenario
    alpha : numpy.ndarray
        Fairness multipliers, per channel

    Returns
    -------
    (numpy.ndarray, numpy.ndarray, numpy.ndarray)
        t_d, t_u and the per-channel time-budget multipliers beta
    """
    s = scenario
    q_d = np.asarray(q_d, dtype=float)
    q_u = np.asarray(q_u, dtype=float)
    cq_d = s.coef_d * q_d
    cq_u = s.coef_u * q_u
    floor_d = s.mcot * q_d / s.p_dk_max
    scale = (1.0 + np.asarray(alpha, dtype=float)) * s.bandwidth * s.access
    t_d = np.zeros_like(q_d)
    t_u = np.zeros_like(q_u)
    beta = np.zeros(s.K)
    for k in range(s.K):
        if not (np.any(cq_d[:, k] > 0) or np.any(cq_u[:, k] > 0)):
            LOG.warning("Channel %s: no link has power, splitting MCOT uniformly", k)
            t_d[:, k] = t_u[:, k] = s.mcot / (s.D + s.U)
            continue

        t_d[:, k], t_u[:, k], beta[k] = _channel_time(cq_d[:, k], floor_d[:, k], cq_u[:, k], scale[k], s.mcot, k)

    return t_d, t_u, beta


def uplink_power(t_u, scenario: Scenario, alpha):
    """
    Water-filling of the UL average power budget U * P_avg over all (user, channel) links

    Returns
    -------
    (numpy.ndarray, float)
        q_u, and the multiplier theta of the average power constraint (nan when no link has time)
    """
    s = scenario
    t_u = np.asarray(t_u, dtype=float)
    q_u = np.zeros_like(t_u)
    active = t_u > 0
    if not np.any(active):
        if s.U:
            LOG.warning("No UL link has time, UL power allocation is degenerate")

        return q_u, math.nan

    weight = np.broadcast_to(s.level_weight(alpha), t_u.shape)
    inv_c = 1.0 / s.coef_u
    budget = s.U * s.p_avg
    while True:
        level = (budget + (t_u * inv_c)[active].sum()) / (t_u * weight)[active].sum()
        q_u = np.where(active, t_u * (weight * level - inv_c), 0.0)
        dropped = active & (q_u <= 0)
        if not np.any(dropped):
            break

        active &= ~dropped

    theta = s.U / level
    return np.maximum(q_u, 0.0), theta


def downlink_power(t_d, scenario: Scenario, alpha):
    """
    Water-filling of the DL total power budget, each link clamped to [0, t * P_dk_max / MCOT]

    Returns
    -------
    (numpy.ndarray, float, numpy.ndarray)
        q_d, multiplier gamma of the total power budget, multipliers xi of the per-link caps
    """
    s = scenario
    t_d = np.asarray(t_d, dtype=float)
    weight = np.broadcast_to(s.level_weight(alpha), t_d.shape)
    coef = s.coef_d
    inv_c = 1.0 / coef
    cap = t_d * s.p_dk_max / s.mcot
    active = t_d > 0
    if not np.any(active):
        return np.zeros_like(t_d), 0.0, np.zeros_like(t_d)

    def powers(gamma):
        return np.where(active, np.clip(t_d * (weight / gamma - inv_c), 0.0, cap), 0.0)

    if cap.sum() <= s.p_gnb_max:
        q_d, gamma = cap, 0.0

    else:
        # all links sit at their caps below 'lo', none has power above 'hi'
        lo = float(np.min((weight / (s.p_dk_max / s.mcot + inv_c))[active]))
        hi = float(np.max((weight * coef)[active]))
        gamma = brentq(lambda g: powers(g).sum() - s.p_gnb_max, lo, hi, xtol=1e-300, rtol=1e-14, maxiter=500)
        q_d = powers(gamma)

    at_cap = active & (q_d >= cap * (1.0 - 1e-12))
    marginal = weight * coef / (1.0 + coef * s.p_dk_max / s.mcot)
    xi = np.where(at_cap, np.maximum(0.0, marginal - gamma), 0.0)
    return q_d, gamma, xi


def time_and_downlink_power(q_u, scenario: Scenario, alpha):
    """
    Optimal times and DL powers for fixed UL powers

    The per-link cap q <= t * P_dk_max / MCOT ties DL power to DL time, so both are solved together. For a given price
    gamma on the DL power budget, each DL link runs at the SNR maximizing its value per unit of time, which makes DL
    time worth a constant rate: per channel it goes to the best DL link, after UL links had the time they are worth at
    that rate. gamma is bisected to exhaust P_gnb_max; where the best link changes, the two bracketing allocations are
    mixed to use the budget exactly.

    Returns
    -------
    (numpy.ndarray, numpy.ndarray, numpy.ndarray, float)
        t_d, t_u, q_d and the multiplier gamma of the DL total power budget
    """
    s = scenario
    q_u = np.asarray(q_u, dtype=float)
    scale = (1.0 + np.asarray(alpha, dtype=float)) * s.bandwidth * s.access
    weight = s.level_weight(alpha)
    coef = s.coef_d
    cq_u = s.coef_u * q_u
    x_max = coef * s.p_dk_max / s.mcot
    uplink_beta = np.zeros(s.K)
    for k in range(s.K):
        if np.any(cq_u[:, k] > 0):
            uplink_beta[k] = _channel_time(np.zeros(0), np.zeros(0), cq_u[:, k], scale[k], s.mcot, k)[2]

    def solve(gamma):
        x = x_max if gamma <= 0 else np.clip(weight * coef / gamma - 1.0, 0.0, x_max)
        value = scale * np.log2(1.0 + x) - gamma * x / coef
        t_d = np.zeros((s.D, s.K))
        t_u = np.zeros_like(q_u)
        for k in range(s.K):
            has_uplink = np.any(cq_u[:, k] > 0)
            best = int(np.argmax(value[:, k])) if s.D else None
            if best is not None and (not has_uplink or (x[best, k] > 0 and value[best, k] > uplink_beta[k])):
                if has_uplink:
                    t_u[:, k] = np.where(cq_u[:, k] > 0, cq_u[:, k] / inverse_h(value[best, k] / scale[k]), 0.0)

                t_d[best, k] = s.mcot - t_u[:, k].sum()

            elif has_uplink:
                t_u[:, k] = np.where(cq_u[:, k] > 0, cq_u[:, k] / inverse_h(uplink_beta[k] / scale[k]), 0.0)

            else:
                LOG.warning("Channel %s: no link can use it, splitting MCOT uniformly", k)
                t_u[:, k] = s.mcot / s.U

        return t_d, t_u, t_d * x / coef

    low = solve(0.0)
    if not s.D or low[2].sum() <= s.p_gnb_max:
        return low + (0.0,)

    lo, hi = 0.0, float(np.max(weight * coef))
    high = solve(hi)
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi or hi - lo <= 1e-15 * hi:
            break

        candidate = solve(mid)
        if candidate[2].sum() > s.p_gnb_max:
            lo, low = mid, candidate

        else:
            hi, high = mid, candidate

    p_low, p_high = low[2].sum(), high[2].sum()
    mix = (s.p_gnb_max - p_high) / (p_low - p_high) if p_low > p_high else 0.0
    t_d, t_u, q_d = (mix * a + (1.0 - mix) * b for a, b in zip(low, high))
    return t_d, t_u, q_d, 0.5 * (lo + hi)


@dataclasses.dataclass(frozen=True)
class TraceRecord:
    outer: int
    inner: int
    objective: float
    lagrangian: float
    max_violation: float
    alpha: tuple
    gamma: float
    theta: float


@dataclasses.dataclass(frozen=True, eq=False)
class AllocationResult:
    allocation: Allocation
    dual: DualState
    trace: List[TraceRecord]
    converged: bool

    def objective(self, scenario):
        return self.allocation.objective(scenario)


class Allocator:
    """
    Alternating time/power maximization with subgradient fairness multipliers

    Parameters
    ----------
    scenario : Scenario
        Scenario to solve
    max_outer : int
        Cap on outer (multiplier) iterations
    tolerance : float
        Relative objective change between outer iterations considered converged
    inner_tolerance : float
        Relative Lagrangian change ending an inner alternation
    max_inner : int
        Cap on time/power alternations per outer iteration
    alpha_step : float
        Initial fairness step, relative to the largest rate floor
    """

    def __init__(self, scenario: Scenario, max_outer=500, tolerance=1e-6, inner_tolerance=1e-8, max_inner=500, alpha_step=1.0):
        self.scenario = scenario
        self.max_outer = max_outer
        self.tolerance = tolerance
        self.inner_tolerance = inner_tolerance
        self.max_inner = max_inner
        self.alpha_step = alpha_step

    def __repr__(self):
        s = self.scenario
        return "allocator K=%s D=%s U=%s" % (s.K, s.D, s.U)

    def alternate(self, q_d, q_u, dual: DualState, trace=None, outer=0):
        """Inner alternation at fixed alpha, ending with a time step"""
        s = self.scenario
        previous = -math.inf
        t_d, t_u, dual.beta = time_allocation(q_d, q_u, s, dual.alpha)
        for inner in range(1, self.max_inner + 1):
            q_u, dual.theta = uplink_power(t_u, s, dual.alpha)
            t_d, t_u, q_d, dual.gamma = time_and_downlink_power(q_u, s, dual.alpha)
            q_u = release_idle_power(t_u, q_u)
            allocation = Allocation(t_d, t_u, q_d, q_u)
            value = allocation.lagrangian(s, dual.alpha)
            if trace is not None:
                violation = max(allocation.violations(s).values())
                trace.append(
                    TraceRecord(outer, inner, allocation.objective(s), value, violation, tuple(dual.alpha), dual.gamma, dual.theta)
                )

            if value - previous <= self.inner_tolerance * abs(value):
                break

            previous = value

        q_d, dual.gamma, dual.xi = downlink_power(t_d, s, dual.alpha)
        t_d, t_u, dual.beta = time_allocation(q_d, q_u, s, dual.alpha)
        return Allocation(t_d, t_u, release_idle_power(t_d, q_d), release_idle_power(t_u, q_u))

    def check_floors(self):
        """Raise InfeasibleError if some channel cannot reach its rate floor even with every budget to itself"""
        s = self.scenario
        for k in np.flatnonzero(s.rate_floor > 0):
            single = Allocator(s.restricted(k), max_inner=self.max_inner, inner_tolerance=self.inner_tolerance)
            start = _warm_start(single.scenario)
            dual = DualState.initial(single.scenario)
            best = single.alternate(start.q_d, start.q_u, dual).objective(single.scenario)
            if best < s.rate_floor[k] * (1.0 - self.tolerance):
                binding = ["mcot"]
                if dual.gamma > 0:
                    binding.append("p-gnb-max")

                if np.any(dual.xi > 0):
                    binding.append("p-dk-max")

                if s.U:
                    binding.append("p-avg")

                msg = "Channel %s: rate floor %.6g bits/s unreachable, at most %.6g with %s binding" % (
                    k,
                    s.rate_floor[k],
                    best,
                    ", ".join(binding),
                )
                raise InfeasibleError(msg, binding=binding)

    @runez.log.timeit("Resource allocation", logger=LOG.debug)
    def run(self, start: Optional[Allocation] = None) -> AllocationResult:
        s = self.scenario
        self.check_floors()
        if start is None:
            start = _warm_start(s)

        dual = DualState.initial(s, alpha_step=self.alpha_step)
        trace = []
        q_d, q_u = start.q_d, start.q_u
        best = None
        previous = None
        converged = False
        for outer in range(1, self.max_outer + 1):
            allocation = self.alternate(q_d, q_u, dual, trace=trace, outer=outer)
            q_d, q_u = allocation.q_d, allocation.q_u
            rates = allocation.channel_rates(s)
            objective = float(rates.sum())
            floors_met = bool(np.all(rates >= s.rate_floor * (1.0 - self.tolerance)))
            if floors_met and (best is None or objective >= best[0]):
                best = objective, allocation

            if floors_met and previous is not None and abs(objective - previous) <= self.tolerance * abs(objective):
                converged = True
                break

            previous = objective
            dual.update_alpha(rates, s.rate_floor)

        if best is None:
            best = objective, allocation

        if not converged:
            LOG.warning("%s did not converge in %s outer iterations, keeping best allocation so far", self, self.max_outer)

        LOG.debug("%s: objective %.6g after %s outer iterations", self, best[0], dual.iteration + 1)
        return AllocationResult(best[1], dual, trace, converged)


def _warm_start(scenario):
    from nru_coexist.baselines import baseline_etop, baseline_otep

    etop = baseline_etop(scenario)
    otep = baseline_otep(scenario)
    return etop if etop.objective(scenario) >= otep.objective(scenario) else otep


def run_algorithm1(scenario: Scenario, **options) -> AllocationResult:
    """Allocation maximizing total NR throughput subject to time, power and fairness constraints"""
    return Allocator(scenario, **options).run()
