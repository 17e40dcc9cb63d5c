import math

import numpy as np
import pytest

from threshmem.capacity import (
    CapacityQuery,
    bits_lower_bound,
    bits_upper_bound,
    packing_bounds,
)


def second_path_lower(n, d, delta):
    """Independent arithmetic grouping via base-10 logs."""
    log2_p = (d - 1) * (math.log10(1.0) - math.log10(4.0 * delta)) / math.log10(2.0)
    if log2_p <= 1.0:
        return float(n)
    return max(float(n), math.log10(log2_p) / math.log10(2.0))


def second_path_upper(n, d, delta):
    ln_2c = (math.log10(2.0) + d * (math.log10(4.0) - math.log10(delta))) * math.log(10.0)
    return n + math.log10(n) / math.log10(2.0) + math.log10(ln_2c) / math.log10(2.0)


def test_packing_bounds_quarter():
    pb = packing_bounds(2, 0.25)
    assert pb.lower_log2 == 0.0
    assert pb.upper_log2 == pytest.approx(6.0)
    assert not pb.lower_clamped


def test_packing_bounds_clamps_vacuous_lower():
    pb = packing_bounds(2, 0.5)
    assert pb.lower_log2 == 0.0
    assert pb.lower_clamped
    assert pb.upper_log2 == pytest.approx(4.0)


def test_packing_upper_monotone_in_delta():
    uppers = [packing_bounds(5, delta).upper_log2 for delta in (0.4, 0.2, 0.1, 0.05)]
    assert all(a < b for a, b in zip(uppers, uppers[1:]))


def test_bits_lower_degenerate_falls_back_to_n():
    res = bits_lower_bound(CapacityQuery(100, 2, 0.25))
    assert res.bits == 100.0
    assert res.degenerate


def test_bits_lower_small_n_large_d():
    res = bits_lower_bound(CapacityQuery(1, 50, 0.01))
    # log2(49 * log2(25)) ~ 7.83
    assert res.bits == pytest.approx(math.log2(49 * math.log2(25)), abs=1e-12)
    assert res.bits == pytest.approx(7.83, abs=0.01)
    assert not res.degenerate


def test_bits_lower_never_below_n():
    rng = np.random.default_rng(0)
    for _ in range(50):
        q = CapacityQuery(int(rng.integers(1, 1000)), int(rng.integers(2, 64)),
                          float(rng.uniform(0.001, 0.5)))
        assert bits_lower_bound(q).bits >= q.n


def test_bits_upper_closed_form():
    res = bits_upper_bound(CapacityQuery(100, 10, 0.1))
    expected = 100 + math.log2(100) + math.log2(math.log(2) + 10 * math.log(40.0))
    assert res.bits == pytest.approx(expected, rel=1e-12)
    assert res.bits == pytest.approx(second_path_upper(100, 10, 0.1), rel=1e-9)


def test_bits_upper_n_dominates():
    res = bits_upper_bound(CapacityQuery(10**6, 2, 0.4))
    assert res.bits == pytest.approx(10**6 + math.log2(10**6), abs=6.0)


def test_two_paths_agree_on_grid():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n = int(rng.integers(1, 1001))
        d = int(rng.integers(2, 65))
        delta = float(10 ** rng.uniform(-3, math.log10(0.5)))
        q = CapacityQuery(n, d, delta)
        lo = bits_lower_bound(q).bits
        hi = bits_upper_bound(q).bits
        assert lo == pytest.approx(second_path_lower(n, d, delta), rel=1e-9)
        assert hi == pytest.approx(second_path_upper(n, d, delta), rel=1e-9)
        assert hi >= lo


def test_gap_is_logarithmic_on_grid():
    rng = np.random.default_rng(9)
    for _ in range(100):
        n = int(rng.integers(1, 1001))
        d = int(rng.integers(2, 65))
        delta = float(10 ** rng.uniform(-3, math.log10(0.4)))
        q = CapacityQuery(n, d, delta)
        gap = bits_upper_bound(q).bits - bits_lower_bound(q).bits
        scale = math.log2(max(n, 2)) + math.log2(d) + math.log2(max(math.log2(1 / delta), 1.01))
        assert gap <= 10 * scale


def test_no_overflow_at_extremes():
    q = CapacityQuery(1, 10_000, 1e-9)
    assert math.isfinite(bits_lower_bound(q).bits)
    assert math.isfinite(bits_upper_bound(q).bits)
    assert math.isfinite(packing_bounds(10_000, 1e-9).upper_log2)


def test_query_validation():
    with pytest.raises(ValueError):
        CapacityQuery(0, 2, 0.1)
    with pytest.raises(ValueError):
        CapacityQuery(1, 1, 0.1)
    with pytest.raises(ValueError):
        CapacityQuery(1, 2, 0.0)
    with pytest.raises(ValueError):
        CapacityQuery(1, 2, 2.5)
