"""
Scalar kernels of the NR rate model, vectorized over links.

With energy-normalized power q = p * t / MCOT, the rate of a link holding the channel for t seconds of each MCOT is
the perspective function a * B * t * log2(1 + c * q / t), where a is the gNB access factor and c = MCOT * g / sigma^2.
"""

import math

import numpy as np
from scipy.special import lambertw

from nru_coexist import ParameterError

LN2 = math.log(2.0)
BRANCH_POINT = -1.0 / math.e
SERIES_BELOW = 1e-4
NEWTON_STEPS = 3


def h_func(x):
    """
    Derivative of t * log2(1 + c*q/t) with respect to t, as a function of the SNR x = c*q/t

    h(x) = ln(1+x)/ln2 - x/((1+x) ln2), strictly increasing, h(0) = 0
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        msg = "h(x) is defined for x >= 0 only"
        raise ParameterError(msg)

    # the two logs cancel to x^2/2 near 0, use the series there
    small = x < SERIES_BELOW
    s = np.where(small, x, 0.0)
    series = s * s * (0.5 - s * (2.0 / 3.0 - s * (0.75 - 0.8 * s)))
    with np.errstate(invalid="ignore"):
        result = np.where(small, series, np.log1p(x) - x / (1.0 + x)) / LN2

    return float(result) if result.ndim == 0 else result


def lambert_w0(z):
    """
    Principal branch of the Lambert W function (W e^W = z)

    Parameters
    ----------
    z : float | numpy.ndarray
        Argument(s) in [-1/e, inf), arguments within rounding error below -1/e are taken as -1/e

    Returns
    -------
    float | numpy.ndarray
    """
    z = np.asarray(z, dtype=float)
    if np.any(z < BRANCH_POINT * (1.0 + 4e-16)):
        msg = "Lambert W0 is real only for z >= -1/e, got min(z)=%r" % float(np.min(z))
        raise ParameterError(msg)

    at_branch = z <= BRANCH_POINT
    result = np.where(at_branch, -1.0, lambertw(np.where(at_branch, 0.0, z), 0).real)
    return float(result) if result.ndim == 0 else result


def inverse_h(level):
    """
    SNR x >= 0 with h(x) = level, through W0:  x = -(1 + 1/W0(-exp(-(level*ln2 + 1))))

    Returns inf where the W0 argument underflows (the link gets no time).
    W0 loses half the digits next to the branch point, so small levels start from the series of h instead, and every
    finite root is polished with Newton steps on h(x) - level.
    """
    level = np.asarray(level, dtype=float)
    w = lambert_w0(-np.exp(-(level * LN2 + 1.0)))
    with np.errstate(divide="ignore"):
        x = -(1.0 + 1.0 / np.asarray(w))

    x = np.where(np.asarray(w) == 0, np.inf, np.maximum(x, 0.0))
    s = np.sqrt(2.0 * LN2 * np.maximum(level, 0.0))
    x = np.where(level < 1e-8, s * (1.0 + 2.0 * s / 3.0), x)
    for _ in range(NEWTON_STEPS):
        active = np.isfinite(x) & (x > 0)
        xa = np.where(active, x, 1.0)
        step = (h_func(xa) - level) * LN2 * (1.0 + xa) ** 2 / xa
        x = np.where(active, np.maximum(xa - step, 0.5 * xa), x)

    return float(x) if x.ndim == 0 else x


def _check_pairs(t, q):
    if np.any(t < 0) or np.any(q < 0):
        msg = "Time and power must be >= 0"
        raise ParameterError(msg)

    if np.any((t == 0) & (q > 0)):
        msg = "A link with power must have time: q > 0 requires t > 0"
        raise ParameterError(msg)


def snr_coefficient(gain, sigma2, mcot):
    """c = MCOT * g / sigma^2, so that the SNR of a link is c * q / t"""
    return mcot * np.asarray(gain, dtype=float) / sigma2


def link_rate(t, q, gain, sigma2, bandwidth, access, mcot):
    """
    Rate (bits/s) of links holding time(s) 't' with energy-normalized power(s) 'q', 0 where t = 0

    Parameters
    ----------
    t, q : float | numpy.ndarray
        Times (s) and energy-normalized powers (W)
    gain : float | numpy.ndarray
        Channel power gains |h|^2
    sigma2 : float
        Noise power (W)
    bandwidth : float | numpy.ndarray
        Channel bandwidth B_k (Hz)
    access : float | numpy.ndarray
        gNB access factor p_k (1/s)
    mcot : float
        Maximum channel occupancy time (s)
    """
    t, q = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(q, dtype=float))
    _check_pairs(t, q)
    c = snr_coefficient(gain, sigma2, mcot)
    active = t > 0
    x = c * q / np.where(active, t, 1.0)
    result = np.where(active, access * bandwidth * t * np.log2(1.0 + x), 0.0)
    return float(result) if result.ndim == 0 else result


rate_dl = link_rate
rate_ul = link_rate


def rate_gradients(t, q, gain, sigma2, bandwidth, access, mcot):
    """
    Returns
    -------
    (numpy.ndarray, numpy.ndarray)
        dR/dt = a B h(x) and dR/dq = a B c / ((1 + x) ln2) at interior points (t > 0)
    """
    t = np.asarray(t, dtype=float)
    q = np.asarray(q, dtype=float)
    c = snr_coefficient(gain, sigma2, mcot)
    x = c * q / t
    scale = access * bandwidth
    return scale * h_func(x), scale * c / ((1.0 + x) * LN2)
