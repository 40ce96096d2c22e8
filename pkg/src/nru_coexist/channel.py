"""UMi street-canyon path loss, Rayleigh fading and thermal noise"""

import dataclasses
from typing import List

import numpy as np

from nru_coexist import ParameterError

SPEED_OF_LIGHT = 3.0e8
NOISE_DENSITY_DBM = -174.0
DISTANCE_RANGE = (10.0, 5000.0)
RNG_ALGORITHMS = {"pcg64": np.random.PCG64}

# Stream tags, keep per-(user, channel) draws independent of each other and of draw order
_DISTANCE_STREAM = 0
_FADING_STREAM = 1


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(watts):
    return 10.0 * np.log10(np.asarray(watts, dtype=float)) + 30.0


def breakpoint_distance(carrier_ghz, h_bs, h_ut, h_e=1.0):
    """d'_BP = 4 h'_BS h'_UT f_c / c, with effective antenna heights h' = h - h_E"""
    return 4.0 * (h_bs - h_e) * (h_ut - h_e) * carrier_ghz * 1e9 / SPEED_OF_LIGHT


def umi_pathloss(distance, carrier_ghz=5.0, h_bs=10.0, h_ut=1.5, h_e=1.0):
    """
    Parameters
    ----------
    distance : float | numpy.ndarray
        Distance(s) in meters, within [10, 5000]
    carrier_ghz : float
        Carrier frequency f_c in GHz
    h_bs, h_ut, h_e : float
        Base station, user terminal and environment heights in meters

    Returns
    -------
    float | numpy.ndarray
        Path loss in dB, first branch up to (and including) the breakpoint distance
    """
    d = np.asarray(distance, dtype=float)
    lo, hi = DISTANCE_RANGE
    if np.any((d < lo) | (d > hi)):
        msg = "Distance must be within [%g, %g] m, got %s" % (lo, hi, distance)
        raise ParameterError(msg)

    d_bp = breakpoint_distance(carrier_ghz, h_bs, h_ut, h_e)
    near = 32.4 + 21.0 * np.log10(d) + 20.0 * np.log10(carrier_ghz)
    far = 32.4 + 40.0 * np.log10(d) + 20.0 * np.log10(carrier_ghz) - 9.5 * np.log10(d_bp**2 + (h_bs - h_ut) ** 2)
    result = np.where(d <= d_bp, near, far)
    return float(result) if result.ndim == 0 else result


def make_rng(*entropy, algorithm="pcg64"):
    """Generator for the stream identified by 'entropy' (seed first, then stream coordinates)"""
    bit_generator = RNG_ALGORITHMS.get(algorithm)
    if bit_generator is None:
        msg = "Unsupported RNG algorithm '%s', expecting one of %s" % (algorithm, ", ".join(RNG_ALGORITHMS))
        raise ParameterError(msg)

    return np.random.Generator(bit_generator(np.random.SeedSequence([int(x) for x in entropy])))


def sample_gain(pathloss_db, rng_seed, fading=True, size=None):
    """
    Parameters
    ----------
    pathloss_db : float
        Path loss in dB
    rng_seed : int | numpy.random.Generator
        Seed (or ready generator) for the fading draw
    fading : bool
        If False, the unit-mean exponential fading factor is forced to 1
    size : int | None
        Number of independent draws, None for a scalar

    Returns
    -------
    float | numpy.ndarray
        |h|^2 = 10^(-PL/10) * X
    """
    mean = 10.0 ** (-np.asarray(pathloss_db, dtype=float) / 10.0)
    if not fading:
        return float(mean) if size is None else np.full(size, mean)

    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else make_rng(rng_seed)
    return mean * rng.exponential(1.0, size=size)


def noise_power(bandwidth):
    """Thermal noise power (W) over 'bandwidth' Hz"""
    if not bandwidth > 0:
        msg = "Bandwidth must be > 0, got %s" % bandwidth
        raise ParameterError(msg)

    return float(dbm_to_watts(NOISE_DENSITY_DBM + 10.0 * np.log10(bandwidth)))


@dataclasses.dataclass(frozen=True)
class ChannelGain:
    user_id: int
    channel_id: int
    gain: float
    distance: float
    pathloss_db: float


def draw_gains(seed, n_users, n_channels, distance_range=(10.0, 2000.0), carrier_ghz=5.0, fading=True, algorithm="pcg64") -> List[ChannelGain]:
    """
    One gain per (user, channel): user distance is uniform in 'distance_range' and shared by all channels,
    fading is independent per (user, channel)
    """
    lo, hi = distance_range
    result = []
    for user in range(n_users):
        distance = make_rng(seed, _DISTANCE_STREAM, user, algorithm=algorithm).uniform(lo, hi)
        pathloss = umi_pathloss(distance, carrier_ghz=carrier_ghz)
        for channel in range(n_channels):
            rng = make_rng(seed, _FADING_STREAM, user, channel, algorithm=algorithm)
            gain = float(sample_gain(pathloss, rng, fading=fading))
            result.append(ChannelGain(user, channel, gain, distance, pathloss))

    return result


def gain_matrix(gains, user_ids, n_channels):
    """Gains of 'user_ids' as a (len(user_ids), n_channels) array"""
    index = {uid: row for row, uid in enumerate(user_ids)}
    result = np.zeros((len(index), n_channels))
    for g in gains:
        row = index.get(g.user_id)
        if row is not None:
            result[row, g.channel_id] = g.gain

    return result
