"""
Slot-level Monte-Carlo simulation of N saturated WiFi nodes and one Category-4 LBT gNB on a shared channel.

Time advances in decision slots: an idle slot lasts T_sigma, a busy slot lasts as long as the exchange it carries.
Runs of idle slots are skipped in one step: WiFi nodes keep the absolute slot of their next attempt in a heap,
and the gNB's next attempt is known as long as the channel stays idle.

WiFi backoff counters count every decision slot, busy ones included, as in the renewal model.
The gNB enters ICCA after each of its own attempts and transmits after L idle slots. A busy slot during ICCA
sends it to ECCA with a fresh counter, a busy slot during ECCA freezes the counter. The ECCA defer period T_d
elapses within the DIFS closing every busy exchange, so the counter resumes in the next decision slot.
A counter decrements at the end of an idle slot, an attempt happens in the slot after the counter reached 0.
"""

import dataclasses
import heapq
import logging
import math
from typing import Optional, Tuple

import numpy as np
import runez

from nru_coexist import ParameterError
from nru_coexist.channel import make_rng
from nru_coexist.params import NruParams, WifiParams

LOG = logging.getLogger(__name__)
MIN_HORIZON = 10**5
OUTCOMES = ("idle", "wifi-success", "gnb-success", "wifi-collision", "cross-collision")

_SIM_STREAM = 2  # Keeps simulation draws apart from channel draws of the same seed

ICCA = "icca"
ECCA_BACKOFF = "ecca-backoff"
ECCA_FROZEN = "frozen"


class UniformStream:
    """Uniform [0, 1) draws served from pre-generated blocks"""

    def __init__(self, rng: np.random.Generator, block_size=1 << 16):
        self.rng = rng
        self.block_size = block_size
        self._block = rng.random(block_size)
        self._index = 0

    def __call__(self):
        if self._index == self.block_size:
            self._block = self.rng.random(self.block_size)
            self._index = 0

        value = self._block[self._index]
        self._index += 1
        return value


@dataclasses.dataclass
class NodeState:
    """
    Contention state of one node

    Attributes
    ----------
    kind : str
        'wifi' or 'gnb'
    window : float
        Initial contention window, in slots
    max_stage : int
        Last backoff stage: WiFi stays there, gNB drops its packet after colliding there
    phase : str | None
        gNB only: icca, ecca-backoff or frozen
    next_slot : int
        WiFi only: decision slot of the next attempt
    defer_left : int
        gNB only: idle slots still needed before the ICCA attempt
    """

    kind: str
    window: float
    max_stage: int
    backoff_stage: int = 0
    backoff_counter: int = 0
    phase: Optional[str] = None
    next_slot: int = 0
    defer_left: int = 0
    attempts: int = 0
    collisions: int = 0
    successes: int = 0
    drops: int = 0

    def draw_counter(self, uniform):
        """Counter uniform in [0, 2^stage * W - 1]"""
        size = (2**self.backoff_stage) * self.window
        self.backoff_counter = min(int(uniform() * size), max(0, math.ceil(size) - 1))
        return self.backoff_counter

    def transmitted(self, collided):
        """Update stage after an attempt"""
        self.attempts += 1
        if not collided:
            self.successes += 1
            self.backoff_stage = 0
            return

        self.collisions += 1
        if self.backoff_stage < self.max_stage:
            self.backoff_stage += 1

        elif self.kind == "gnb":
            self.drops += 1
            self.backoff_stage = 0

    # gNB only

    @property
    def idle_slots_to_attempt(self):
        return self.defer_left + self.backoff_counter

    def enter_icca(self, defer_slots):
        self.phase = ICCA
        self.defer_left = defer_slots
        self.backoff_counter = 0

    def sensed_idle(self, count):
        used = min(self.defer_left, count)
        self.defer_left -= used
        self.backoff_counter -= count - used
        if self.phase == ECCA_FROZEN and count:
            self.phase = ECCA_BACKOFF

    def sensed_busy(self, uniform):
        if self.phase == ICCA:
            self.draw_counter(uniform)

        self.phase = ECCA_FROZEN
        self.defer_left = 0


@dataclasses.dataclass(frozen=True)
class SimStats:
    """
    Attributes
    ----------
    n_wifi : int
        Number of WiFi nodes
    slots : int
        Decision slots simulated
    counts : dict
        Decision slots per outcome class
    seconds : dict
        Simulated time per outcome class
    wifi_attempts, wifi_collisions : int
        WiFi attempts, and how many of them collided (summed over nodes)
    wifi_successes : tuple
        Successful exchanges per WiFi node
    gnb_attempts, gnb_collisions, gnb_successes, gnb_drops : int
        gNB counters (all 0 without gNB)
    seed : int
        Seed of the run
    """

    n_wifi: int
    slots: int
    counts: dict
    seconds: dict
    wifi_attempts: int
    wifi_collisions: int
    wifi_successes: Tuple[int, ...]
    gnb_attempts: int
    gnb_collisions: int
    gnb_successes: int
    gnb_drops: int
    seed: int

    @property
    def total_seconds(self):
        return sum(self.seconds.values())

    @property
    def tau_w(self):
        return self.wifi_attempts / (self.n_wifi * self.slots) if self.n_wifi else 0.0

    @property
    def tau_l(self):
        return self.gnb_attempts / self.slots

    @property
    def p_w(self):
        return self.wifi_collisions / self.wifi_attempts if self.wifi_attempts else 0.0

    @property
    def p_l(self):
        return self.gnb_collisions / self.gnb_attempts if self.gnb_attempts else 0.0

    @property
    def mean_slot(self):
        return self.total_seconds / self.slots

    def fractions(self):
        """Share of simulated time spent in each outcome class"""
        total = self.total_seconds
        return {k: v / total for k, v in self.seconds.items()}

    def airtime_ratios(self):
        """Successful airtime ratio of the gNB, and of one WiFi node"""
        total = self.total_seconds
        r_gnb = self.seconds["gnb-success"] / total
        r_wifi = self.seconds["wifi-success"] / (total * self.n_wifi) if self.n_wifi else 0.0
        return r_gnb, r_wifi

    @classmethod
    def merged(cls, runs):
        """Pool independent runs of the same configuration"""
        runs = list(runs)
        first = runs[0]
        return cls(
            n_wifi=first.n_wifi,
            slots=sum(r.slots for r in runs),
            counts={k: sum(r.counts[k] for r in runs) for k in OUTCOMES},
            seconds={k: sum(r.seconds[k] for r in runs) for k in OUTCOMES},
            wifi_attempts=sum(r.wifi_attempts for r in runs),
            wifi_collisions=sum(r.wifi_collisions for r in runs),
            wifi_successes=tuple(map(sum, zip(*(r.wifi_successes for r in runs)))),
            gnb_attempts=sum(r.gnb_attempts for r in runs),
            gnb_collisions=sum(r.gnb_collisions for r in runs),
            gnb_successes=sum(r.gnb_successes for r in runs),
            gnb_drops=sum(r.gnb_drops for r in runs),
            seed=first.seed,
        )


@runez.log.timeit("Simulation", logger=LOG.debug)
def simulate(wifi: WifiParams, nru: Optional[NruParams], n_wifi, horizon_slots, seed, algorithm="pcg64") -> SimStats:
    """
    Parameters
    ----------
    wifi : WifiParams
        WiFi parameters, the CCA slot is shared with the gNB
    nru : NruParams | None
        gNB parameters, None simulates WiFi alone
    n_wifi : int
        Number of saturated WiFi nodes
    horizon_slots : int
        Decision slots to simulate, at least MIN_HORIZON
    seed : int
        Seed, identical inputs and seed give identical results
    algorithm : str
        PRNG algorithm

    Returns
    -------
    SimStats
    """
    if horizon_slots < MIN_HORIZON:
        msg = "Horizon must be at least %s decision slots, got %s" % (MIN_HORIZON, horizon_slots)
        raise ParameterError(msg)

    if n_wifi < 0 or int(n_wifi) != n_wifi or (n_wifi == 0 and nru is None):
        msg = "Need an integer number of WiFi nodes >= 0 (>= 1 without gNB), got %s" % n_wifi
        raise ParameterError(msg)

    uniform = UniformStream(make_rng(seed, _SIM_STREAM, algorithm=algorithm))
    durations = {
        "idle": wifi.slot,
        "wifi-success": wifi.success_time(),
        "wifi-collision": wifi.collision_time,
        "gnb-success": nru.occupancy_time if nru else 0.0,
        "cross-collision": max(wifi.collision_time, nru.occupancy_time) if nru else 0.0,
    }
    counts = dict.fromkeys(OUTCOMES, 0)
    nodes = [NodeState("wifi", wifi.window, wifi.max_stage) for _ in range(int(n_wifi))]
    pending = []
    for i, node in enumerate(nodes):
        node.next_slot = node.draw_counter(uniform)
        pending.append((node.next_slot, i))

    heapq.heapify(pending)
    gnb = None
    if nru is not None:
        gnb = NodeState("gnb", nru.window, nru.max_stage - 1)
        gnb.enter_icca(nru.icca_slots)

    now = 0
    while now < horizon_slots:
        gnb_slot = now + gnb.idle_slots_to_attempt if gnb else horizon_slots
        slot = min(pending[0][0] if pending else horizon_slots, gnb_slot, horizon_slots)
        idle = slot - now
        if idle:
            counts["idle"] += idle
            if gnb:
                gnb.sensed_idle(idle)

        if slot >= horizon_slots:
            break

        senders = []
        while pending and pending[0][0] == slot:
            senders.append(heapq.heappop(pending)[1])

        gnb_sends = gnb is not None and gnb_slot == slot
        if gnb_sends:
            outcome = "cross-collision" if senders else "gnb-success"

        else:
            outcome = "wifi-success" if len(senders) == 1 else "wifi-collision"

        counts[outcome] += 1
        collided = len(senders) + gnb_sends > 1
        for i in senders:
            node = nodes[i]
            node.transmitted(collided)
            node.next_slot = slot + 1 + node.draw_counter(uniform)
            heapq.heappush(pending, (node.next_slot, i))

        if gnb_sends:
            gnb.transmitted(collided)
            gnb.enter_icca(nru.icca_slots)

        elif gnb:
            gnb.sensed_busy(uniform)

        now = slot + 1

    stats = SimStats(
        n_wifi=int(n_wifi),
        slots=sum(counts.values()),
        counts=counts,
        seconds={k: counts[k] * durations[k] for k in OUTCOMES},
        wifi_attempts=sum(n.attempts for n in nodes),
        wifi_collisions=sum(n.collisions for n in nodes),
        wifi_successes=tuple(n.successes for n in nodes),
        gnb_attempts=gnb.attempts if gnb else 0,
        gnb_collisions=gnb.collisions if gnb else 0,
        gnb_successes=gnb.successes if gnb else 0,
        gnb_drops=gnb.drops if gnb else 0,
        seed=seed,
    )
    LOG.debug("Simulated %s slots, N=%s: tau_w=%.5g tau_l=%.5g", stats.slots, n_wifi, stats.tau_w, stats.tau_l)
    return stats


def empirical_throughputs(stats: SimStats, payload):
    """
    Returns
    -------
    (float, float)
        WiFi goodput (bits/s, all nodes together), and the fraction of time the gNB holds the channel successfully
    """
    total = stats.total_seconds
    if not total > 0:
        msg = "Simulation covers no time, throughputs are undefined"
        raise ParameterError(msg)

    return sum(stats.wifi_successes) * payload / total, stats.seconds["gnb-success"] / total
