import math

import numpy as np
import pytest

from gigazoom.geometry import Resolution
from gigazoom.schedule import exponential_schedule, extend_overzoom, linear_schedule, make_schedule

PANDA = (26908, 15024, 2560, 1440, 10)


def random_tuples(n, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        wmax, hmax = int(rng.integers(1, 4000)), int(rng.integers(1, 4000))
        w0 = wmax + int(rng.integers(0, 60000))
        h0 = hmax + int(rng.integers(0, 60000))
        yield w0, h0, wmax, hmax, int(rng.integers(1, 40))


@pytest.mark.parametrize("build", [linear_schedule, exponential_schedule])
def test_endpoints(build):
    s = build(*PANDA)
    assert s[0] == Resolution(26908, 15024)
    assert s[10] == Resolution(2560, 1440)
    assert len(s) == 11 and s.last == 10


def test_linear_midpoint():
    assert linear_schedule(*PANDA)[5] == Resolution(14734, 8232)


def test_exponential_midpoint_is_geometric_mean():
    mid = exponential_schedule(*PANDA)[5]
    assert mid == Resolution(round(math.sqrt(26908 * 2560)), round(math.sqrt(15024 * 1440)))
    assert mid == Resolution(8300, 4651)


def test_overzoom_continues_ratio():
    s = extend_overzoom(exponential_schedule(*PANDA), 1)
    # 2560 * (2560/26908)^0.1 and 1440 * (1440/15024)^0.1
    expected = Resolution(round(2560 * (2560 / 26908) ** 0.1), round(1440 * (1440 / 15024) ** 0.1))
    assert s[11] == expected == Resolution(2023, 1139)
    assert s.overzoom == 1 and s.levels == 10


def test_overzoom_zero_is_identity():
    s = exponential_schedule(*PANDA)
    assert extend_overzoom(s, 0) is s


@pytest.mark.parametrize("kind, levels", [("linear", 40), ("exponential", 10)])
def test_overzoom_two_levels_monotone(kind, levels):
    s = make_schedule(kind, Resolution(26908, 15024), Resolution(2560, 1440), levels, 2)
    assert len(s) == levels + 3
    assert s[levels + 1].w < 2560 and s[levels + 2].w < s[levels + 1].w and s[levels + 2].h < s[levels + 1].h


def test_linear_overzoom_continues_step():
    s = make_schedule("linear", Resolution(26908, 15024), Resolution(2560, 1440), 40, 1)
    assert s[41] == Resolution(round(2560 - 24348 / 40), round(1440 - 13584 / 40))


def test_linear_overzoom_below_one_pixel():
    with pytest.raises(ValueError):
        extend_overzoom(linear_schedule(100, 100, 10, 10, 2), 3)


def test_negative_overzoom():
    with pytest.raises(ValueError):
        extend_overzoom(linear_schedule(*PANDA), -1)


@pytest.mark.parametrize(
    "args", [(100, 100, 200, 50, 3), (100, 100, 50, 0, 3), (100, 100, 50, 50, 0)]
)
def test_invalid_parameters(args):
    with pytest.raises(ValueError):
        linear_schedule(*args)
    with pytest.raises(ValueError):
        exponential_schedule(*args)


def test_unknown_kind():
    with pytest.raises(ValueError):
        make_schedule("cubic", Resolution(10, 10), Resolution(5, 5), 2)


def test_degenerate_start_at_target():
    s = exponential_schedule(640, 360, 640, 360, 4)
    assert set(s.dims) == {Resolution(640, 360)}


@pytest.mark.parametrize("build", [linear_schedule, exponential_schedule])
def test_random_endpoints_and_monotonicity(build):
    for w0, h0, wmax, hmax, L in random_tuples(1000):
        s = build(w0, h0, wmax, hmax, L)
        assert s[0] == Resolution(w0, h0)
        assert abs(s[L].w - wmax) <= 1 and abs(s[L].h - hmax) <= 1
        ws = [d.w for d in s.dims]
        hs = [d.h for d in s.dims]
        assert ws == sorted(ws, reverse=True) and hs == sorted(hs, reverse=True)
        assert min(ws) >= 1 and min(hs) >= 1


def test_random_exponential_ratio_constancy():
    for w0, h0, wmax, hmax, L in random_tuples(1000, seed=1):
        s = exponential_schedule(w0, h0, wmax, hmax, L)
        true_ratio = (wmax / w0) ** (1 / L)
        for t in range(L):
            ratio = s[t + 1].w / s[t].w
            # rounding moves each endpoint by <= 0.5 px
            assert abs(ratio - true_ratio) <= 2 / s[t].w
