import math

import numpy as np
import pytest

from nru_coexist import ParameterError
from nru_coexist.channel import (
    breakpoint_distance,
    dbm_to_watts,
    draw_gains,
    gain_matrix,
    make_rng,
    noise_power,
    sample_gain,
    umi_pathloss,
    watts_to_dbm,
)


def test_conversions():
    assert dbm_to_watts(30) == pytest.approx(1)
    assert dbm_to_watts(23) == pytest.approx(0.19952623, rel=1e-8)
    assert watts_to_dbm(dbm_to_watts(35)) == pytest.approx(35)
    assert noise_power(20e6) == pytest.approx(dbm_to_watts(-174 + 10 * math.log10(20e6)))
    assert noise_power(20e6) == pytest.approx(8.0e-14, rel=0.01)

    with pytest.raises(ParameterError):
        noise_power(0)


def test_pathloss():
    assert breakpoint_distance(5, 10, 1.5) == pytest.approx(300)

    # First branch up to the breakpoint included
    assert umi_pathloss(100) == pytest.approx(32.4 + 21 * 2 + 20 * math.log10(5))
    assert umi_pathloss(300) == pytest.approx(32.4 + 21 * math.log10(300) + 20 * math.log10(5))
    far = 32.4 + 40 * math.log10(1000) + 20 * math.log10(5) - 9.5 * math.log10(300**2 + 8.5**2)
    assert umi_pathloss(1000) == pytest.approx(far)

    distances = np.array([10, 50, 300, 301, 2000, 5000])
    losses = umi_pathloss(distances)
    assert losses.shape == (6,)
    assert np.all(np.diff(losses) > 0)

    for bad in (9.9, 5001, [10, 6000]):
        with pytest.raises(ParameterError):
            umi_pathloss(bad)


def test_gains():
    assert sample_gain(100, 1, fading=False) == pytest.approx(1e-10)
    assert np.allclose(sample_gain(100, 1, fading=False, size=3), 1e-10)

    # Unit mean Rayleigh power fading
    draws = sample_gain(0, make_rng(5), size=200000)
    assert draws.mean() == pytest.approx(1, rel=0.01)
    assert draws.min() > 0

    # Same seed, same draws, independent of how many users are drawn
    a = draw_gains(7, 3, 2)
    b = draw_gains(7, 5, 2)
    assert a == b[:6]
    assert draw_gains(8, 3, 2) != a
    assert len(a) == 6
    assert all(10 <= g.distance <= 2000 for g in a)

    # Distance is shared by all channels of a user, fading is not
    assert a[0].distance == a[1].distance
    assert a[0].gain != a[1].gain

    matrix = gain_matrix(b, [3, 4], 2)
    assert matrix.shape == (2, 2)
    assert matrix[1, 0] == b[8].gain

    flat = draw_gains(7, 2, 2, fading=False)
    assert flat[0].gain == flat[1].gain == pytest.approx(10 ** (-flat[0].pathloss_db / 10))

    with pytest.raises(ParameterError):
        make_rng(1, algorithm="mt19937")
