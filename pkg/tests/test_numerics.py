import math
from decimal import Decimal
from fractions import Fraction

import pytest

from dextca.errors import DomainError
from dextca.numerics import (
    MAX_TICK,
    MIN_TICK,
    SplitMix64,
    approx_sqrt,
    as_fraction,
    format_fixed,
    mean_fraction,
    parse_fixed,
    sqrt_ratio_at_tick,
    tick_containing,
)


def test_as_fraction_accepts_exact_forms():
    assert as_fraction("1.5") == Fraction(3, 2)
    assert as_fraction(7) == Fraction(7)
    assert as_fraction(Decimal("0.25")) == Fraction(1, 4)
    assert as_fraction(0.1) == Fraction(0.1)  # the binary value, exactly


def test_as_fraction_rejects_non_numeric():
    with pytest.raises(DomainError):
        as_fraction("not-a-number")
    with pytest.raises(DomainError):
        as_fraction(True)


def test_format_fixed_half_even():
    assert format_fixed(Fraction(5, 1000), 2) == "0.00"  # ties to even, down
    assert format_fixed(Fraction(15, 1000), 2) == "0.02"  # ties to even, up
    assert format_fixed(Fraction(25, 1000), 2) == "0.02"
    assert format_fixed(Fraction(16, 1000), 2) == "0.02"
    assert format_fixed(Fraction(-15, 1000), 2) == "-0.02"


def test_format_fixed_no_negative_zero():
    assert format_fixed(Fraction(-1, 10**30)) == "0." + "0" * 18


def test_format_fixed_parse_round_trip():
    rng = SplitMix64(7)
    for _ in range(200):
        x = Fraction(rng.randint(-10**24, 10**24), 10**18)
        text = format_fixed(x)
        assert parse_fixed(text) == x  # 18 places represent it exactly
        assert format_fixed(parse_fixed(text)) == text


def test_parse_fixed_rejects_garbage():
    with pytest.raises(DomainError):
        parse_fixed("12.3.4")


def test_approx_sqrt_exact_on_squares():
    assert approx_sqrt(Fraction(4)) == 2
    assert approx_sqrt(Fraction(9, 4)) == Fraction(3, 2)


def test_approx_sqrt_bracket():
    r = approx_sqrt(Fraction(2))
    assert r * r <= 2 < (r + Fraction(1, 10**60)) ** 2
    with pytest.raises(DomainError):
        approx_sqrt(Fraction(-1))


def test_sqrt_ratio_at_tick_matches_float():
    for tick in (-100_000, -5000, -1, 0, 1, 2, 777, 100_000):
        expected = math.exp(tick / 2 * math.log(10001 / 10000))
        assert float(sqrt_ratio_at_tick(tick)) == pytest.approx(expected, rel=1e-12)
    assert sqrt_ratio_at_tick(0) == 1


def test_sqrt_ratio_symmetry():
    for tick in (1, 60, 887):
        product = sqrt_ratio_at_tick(tick) * sqrt_ratio_at_tick(-tick)
        assert abs(product - 1) < Fraction(1, 10**50)


def test_sqrt_ratio_out_of_range():
    with pytest.raises(DomainError):
        sqrt_ratio_at_tick(MAX_TICK + 1)
    with pytest.raises(DomainError):
        sqrt_ratio_at_tick(MIN_TICK - 1)


def test_tick_containing_boundaries():
    # a boundary belongs to its own tick; just below belongs to the previous
    for tick in (-300, -1, 0, 1, 250):
        boundary = sqrt_ratio_at_tick(tick)
        assert tick_containing(boundary) == tick
        assert tick_containing(boundary - Fraction(1, 10**40)) == tick - 1


def test_tick_containing_bracket_invariant():
    rng = SplitMix64(11)
    for _ in range(100):
        sp = Fraction(rng.randint(1, 4 * 10**6), 10**6)  # prices in (0, 16]
        t = tick_containing(sp)
        assert sqrt_ratio_at_tick(t) <= sp < sqrt_ratio_at_tick(t + 1)
    with pytest.raises(DomainError):
        tick_containing(Fraction(0))


def test_splitmix_deterministic_streams():
    a = SplitMix64(1, 2, 3)
    b = SplitMix64(1, 2, 3)
    assert [a.next_u64() for _ in range(8)] == [b.next_u64() for _ in range(8)]
    assert SplitMix64(1, 2, 4).next_u64() != SplitMix64(1, 2, 3).next_u64()


def test_splitmix_randrange_bounds():
    rng = SplitMix64(3)
    draws = [rng.randrange(7) for _ in range(2000)]
    assert min(draws) == 0 and max(draws) == 6
    with pytest.raises(DomainError):
        rng.randrange(0)
    assert rng.randint(5, 5) == 5


def test_splitmix_random_unit_interval():
    rng = SplitMix64(4)
    draws = [rng.random() for _ in range(2000)]
    assert all(0.0 <= d < 1.0 for d in draws)
    assert abs(sum(draws) / len(draws) - 0.5) < 0.02


def test_splitmix_permutation_uniformity():
    # all 6 orderings of 3 items should appear at near-equal frequency
    rng = SplitMix64(5)
    counts: dict[tuple[int, ...], int] = {}
    n = 6000
    for _ in range(n):
        p = rng.permutation(3)
        counts[p] = counts.get(p, 0) + 1
    assert len(counts) == 6
    assert all(abs(c - n / 6) < 120 for c in counts.values())  # ~4 sigma


def test_mean_fraction():
    assert mean_fraction([Fraction(1, 3), Fraction(2, 3)]) == Fraction(1, 2)
    with pytest.raises(DomainError):
        mean_fraction([])
