"""
Protocol constants for both contenders of a shared unlicensed channel.

All values are SI (seconds, bits, bits/s): unit conversion is done once, when reading configuration.
"""

import dataclasses
import math
from typing import ClassVar, Dict, Tuple

from nru_coexist import ParameterError


@dataclasses.dataclass(frozen=True)
class LbtClass:
    """One row of the NR-U channel access priority class table"""

    priority: int
    cw_min: int
    cw_max: int
    defer_slots: int
    mcots: Tuple[float, ...]

    def __repr__(self):
        return "class %s" % self.priority

    @property
    def windows(self):
        """Admissible contention window sizes, from cw_min doubling up to cw_max"""
        result = []
        w = self.cw_min
        while w <= self.cw_max:
            result.append(w)
            w = 2 * w + 1

        return result

    def nearest_window(self, value):
        return min(self.windows, key=lambda w: (abs(w - value), w))


LBT_CLASSES = {
    1: LbtClass(1, 3, 7, 1, (2e-3,)),
    2: LbtClass(2, 7, 15, 1, (3e-3,)),
    3: LbtClass(3, 15, 63, 3, (8e-3, 10e-3)),
    4: LbtClass(4, 15, 1023, 7, (8e-3, 10e-3)),
}


def lbt_class_for_mcot(mcot):
    """Lowest priority class allowing given MCOT (in seconds)"""
    for cls in LBT_CLASSES.values():
        if any(math.isclose(mcot, x) for x in cls.mcots):
            return cls

    allowed = sorted({x * 1000 for c in LBT_CLASSES.values() for x in c.mcots})
    msg = "MCOT %g ms is not allowed by any priority class (allowed: %s ms)" % (mcot * 1000, allowed)
    raise ParameterError(msg)


def _check_positive(owner, **values):
    for name, value in values.items():
        if not value > 0:
            msg = "%s.%s must be > 0, got %s" % (owner, name, value)
            raise ParameterError(msg)


@dataclasses.dataclass(frozen=True)
class WifiParams:
    """
    WiFi DCF parameters (RTS/CTS always on)

    Attributes
    ----------
    window : float
        Initial contention window W_w (slots)
    max_stage : int
        Maximum backoff stage m_w
    slot : float
        CCA slot duration T_sigma, shared with the gNB
    sifs, difs, pifs : float
        Inter-frame spacings (PIFS is kept for completeness, no formula uses it)
    rts, cts, header, ack : int
        Frame sizes in bits
    rate : float
        PHY rate r_w in bits/s
    delay : float
        Propagation delay
    payload : float
        Mean payload E(PL) in bits
    """

    window: float = 16
    max_stage: int = 6
    slot: float = 9e-6
    sifs: float = 16e-6
    difs: float = 34e-6
    pifs: float = 25e-6
    rts: int = 288
    cts: int = 352
    header: int = 400
    ack: int = 364
    rate: float = 54e6
    delay: float = 0.1e-6
    payload: float = 1500 * 8

    def __post_init__(self):
        if self.window < 1 or self.max_stage < 1:
            msg = "WiFi window must be >= 1 and max stage >= 1, got %s and %s" % (self.window, self.max_stage)
            raise ParameterError(msg)

        _check_positive(
            "wifi",
            slot=self.slot,
            sifs=self.sifs,
            difs=self.difs,
            pifs=self.pifs,
            rts=self.rts,
            cts=self.cts,
            header=self.header,
            ack=self.ack,
            rate=self.rate,
            delay=self.delay,
            payload=self.payload,
        )

    @property
    def handshake_time(self):
        """Y: everything in a successful exchange except the payload itself"""
        bits = self.rts + self.cts + self.header + self.ack
        return bits / self.rate + 3 * self.sifs + self.difs + 4 * self.delay

    def success_time(self, payload=None):
        """T_s for given payload (defaults to the configured mean payload)"""
        if payload is None:
            payload = self.payload

        return self.handshake_time + payload / self.rate

    @property
    def collision_time(self):
        """T_c: a collided RTS followed by DIFS"""
        return self.rts / self.rate + self.difs + self.delay

    def with_payload(self, payload):
        return dataclasses.replace(self, payload=payload)


@dataclasses.dataclass(frozen=True)
class NruParams:
    """
    gNB Category-4 LBT parameters

    Attributes
    ----------
    window : float
        Initial contention window W_l (slots), real-valued when tuned
    max_stage : int
        Maximum backoff stage m_l
    icca_slots : int
        L, number of idle slots the gNB senses in ICCA before transmitting
    silent : float
        Silent period T_f
    mcot : float
        Maximum channel occupancy time
    gnb_slot : float
        NR slot T_gNB, padding until the next slot boundary
    priority_class : int
        LBT priority class (1..4)
    access_form : str
        'renewal' (default), 'geometric' or 'as-published', see `coexistence.gnb_access_probability`
    """

    forms: ClassVar[Tuple[str, ...]] = ("renewal", "geometric", "as-published")

    window: float = 16
    max_stage: int = 6
    icca_slots: int = 8
    silent: float = 16e-6
    mcot: float = 8e-3
    gnb_slot: float = 0.25e-3
    priority_class: int = 3
    access_form: str = "renewal"

    def __post_init__(self):
        if self.window < 1 or self.max_stage < 1 or self.icca_slots < 1:
            msg = "gNB window, max stage and ICCA slots must all be >= 1, got %s, %s, %s" % (
                self.window,
                self.max_stage,
                self.icca_slots,
            )
            raise ParameterError(msg)

        _check_positive("nru", silent=self.silent, mcot=self.mcot, gnb_slot=self.gnb_slot)
        if self.priority_class not in LBT_CLASSES:
            msg = "Priority class must be one of %s, got %s" % (sorted(LBT_CLASSES), self.priority_class)
            raise ParameterError(msg)

        if not any(math.isclose(self.mcot, x) for x in self.lbt_class.mcots):
            msg = "MCOT %g ms is not allowed for %s" % (self.mcot * 1000, self.lbt_class)
            raise ParameterError(msg)

        if self.access_form not in self.forms:
            msg = "Unknown gNB access form '%s', expecting one of %s" % (self.access_form, ", ".join(self.forms))
            raise ParameterError(msg)

    @property
    def lbt_class(self) -> LbtClass:
        return LBT_CLASSES[self.priority_class]

    @property
    def defer_slots(self):
        """m_p of the configured priority class"""
        return self.lbt_class.defer_slots

    def defer_time(self, slot):
        """T_d = T_f + m_p * T_sigma"""
        return self.silent + self.defer_slots * slot

    @property
    def occupancy_time(self):
        """T_s_l = T_c_l: a won channel is held for MCOT plus NR-slot alignment, whether or not it collides"""
        return self.mcot + self.gnb_slot

    def with_window(self, window):
        return dataclasses.replace(self, window=window)

    def with_mcot(self, mcot):
        """Same parameters with another MCOT, moving to the matching priority class if needed"""
        priority = self.priority_class
        if not any(math.isclose(mcot, x) for x in self.lbt_class.mcots):
            priority = lbt_class_for_mcot(mcot).priority

        return dataclasses.replace(self, mcot=mcot, priority_class=priority)


def params_summary(wifi: WifiParams, nru: NruParams) -> Dict[str, float]:
    """Derived durations, for diagnostics output"""
    return {
        "T_s_w": wifi.success_time(),
        "T_c_w": wifi.collision_time,
        "T_s_l": nru.occupancy_time,
        "Y": wifi.handshake_time,
        "T_d": nru.defer_time(wifi.slot),
    }
