"""Exact-rational numeric helpers shared across the package.

Curve math runs on ``fractions.Fraction`` end to end.  Irrational constants
(tick boundaries, square roots of price targets) enter as fixed rational
approximations computed once at high precision and cached, so every
downstream operation is exact arithmetic over shared constants and therefore
bit-reproducible.
"""

from __future__ import annotations

import math
from decimal import Decimal, localcontext
from fractions import Fraction
from functools import lru_cache
from math import isqrt
from typing import Iterable

from .errors import DomainError

# Tick i marks the price TICK_BASE**i, the conventional 1 bp grid.
TICK_BASE_NUM = 10001
TICK_BASE_DEN = 10000

# Outermost representable ticks of the grid (price spans ~[2**-128, 2**128]).
MIN_TICK = -887272
MAX_TICK = 887272

# Significant digits carried by the cached irrational constants.  Far beyond
# every tolerance in the test suite while keeping Fractions small.
SQRT_DIGITS = 60

_LOG_TICK_BASE = math.log(TICK_BASE_NUM / TICK_BASE_DEN)

BPS = Fraction(1, 10_000)
ONE = Fraction(1)


def as_fraction(value: int | str | Fraction | Decimal | float) -> Fraction:
    """Convert supported inputs to Fraction exactly.

    Floats are accepted (they are exact binary rationals) but decimal strings
    are the canonical wire form.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise DomainError("bool is not a numeric value")
    try:
        return Fraction(value)
    except (ValueError, TypeError, ArithmeticError) as exc:
        raise DomainError(f"not a numeric value: {value!r}") from exc


def approx_sqrt(x: Fraction, digits: int = SQRT_DIGITS) -> Fraction:
    """Rational approximation of sqrt(x) with `digits` fractional decimal digits."""
    if x < 0:
        raise DomainError("sqrt of a negative value")
    scale = 10**digits
    # floor(sqrt(num/den) * scale) == isqrt(num * scale**2 // den)
    root = isqrt(x.numerator * scale * scale // x.denominator)
    return Fraction(root, scale)


@lru_cache(maxsize=None)
def _ln_tick_base() -> Decimal:
    with localcontext() as ctx:
        ctx.prec = SQRT_DIGITS + 15
        return (Decimal(TICK_BASE_NUM) / Decimal(TICK_BASE_DEN)).ln()


@lru_cache(maxsize=None)
def sqrt_ratio_at_tick(tick: int) -> Fraction:
    """Sqrt of the price at tick boundary `tick`, as a fixed rational constant.

    Computed as exp(tick/2 * ln(base)) in high-precision decimal; all callers
    share the cached value, so exact comparisons against it are meaningful.
    """
    if not MIN_TICK <= tick <= MAX_TICK:
        raise DomainError(f"tick {tick} outside [{MIN_TICK}, {MAX_TICK}]")
    if tick == 0:
        return ONE
    with localcontext() as ctx:
        ctx.prec = SQRT_DIGITS + 15
        value = (_ln_tick_base() * Decimal(tick) / 2).exp()
    return Fraction(value)


def tick_containing(sqrt_price: Fraction) -> int:
    """Integer tick t with sqrt_ratio(t) <= sqrt_price < sqrt_ratio(t+1)."""
    if sqrt_price <= 0:
        raise DomainError("sqrt_price must be positive")
    t = math.floor(2 * math.log(float(sqrt_price)) / _LOG_TICK_BASE)
    t = max(MIN_TICK, min(MAX_TICK - 1, t))
    while t < MAX_TICK - 1 and sqrt_ratio_at_tick(t + 1) <= sqrt_price:
        t += 1
    while t > MIN_TICK and sqrt_ratio_at_tick(t) > sqrt_price:
        t -= 1
    return t


def format_fixed(value: Fraction | int, places: int = 18) -> str:
    """Decimal string with exactly `places` fractional digits, half-even.

    The canonical wire encoding for prices and quantities: parsing it back
    with Fraction() is exact, and re-encoding a parsed value is the identity.
    """
    x = value if isinstance(value, Fraction) else Fraction(value)
    negative = x < 0
    if negative:
        x = -x
    scale = 10**places
    q, r = divmod(x.numerator * scale, x.denominator)
    if 2 * r > x.denominator or (2 * r == x.denominator and q & 1):
        q += 1
    int_part, frac_part = divmod(q, scale)
    text = f"{int_part}.{frac_part:0{places}d}"
    return f"-{text}" if negative and q else text


def parse_fixed(text: str) -> Fraction:
    """Parse a decimal string (wire form) to an exact Fraction."""
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise DomainError(f"not a decimal string: {text!r}") from exc


_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


class SplitMix64:
    """Small deterministic RNG (splitmix64) for sampling and generators.

    Implemented in-package so seeded streams never depend on third-party
    library versions.  Seeds are derived from an arbitrary tuple of integers,
    e.g. (global seed, block height, trade index).
    """

    def __init__(self, *key: int):
        state = _GOLDEN
        for part in key:
            state = _mix64(state ^ _mix64(part & _MASK64) ^ ((part >> 64) & _MASK64))
        self._state = state

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        return _mix64(self._state)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (2.0**-53)

    def getrandbits(self, bits: int) -> int:
        """Uniform integer with `bits` random bits (high bits of drawn words)."""
        if bits <= 0:
            raise DomainError("getrandbits needs bits >= 1")
        x = 0
        filled = 0
        while filled < bits:
            x = (x << 64) | self.next_u64()
            filled += 64
        return x >> (filled - bits)

    def randrange(self, n: int) -> int:
        """Uniform integer in [0, n), unbiased via rejection; n may exceed 64 bits."""
        if n <= 0:
            raise DomainError("randrange needs n >= 1")
        if n == 1:
            return 0
        bits = n.bit_length()
        while True:
            x = self.getrandbits(bits)
            if x < n:
                return x

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] inclusive."""
        return lo + self.randrange(hi - lo + 1)

    def permutation(self, n: int) -> tuple[int, ...]:
        """Uniformly random permutation of range(n) (Fisher-Yates)."""
        items = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.randrange(i + 1)
            items[i], items[j] = items[j], items[i]
        return tuple(items)

    def choice(self, seq: list | tuple):
        return seq[self.randrange(len(seq))]


def mean_fraction(values: Iterable[Fraction]) -> Fraction:
    items = list(values)
    if not items:
        raise DomainError("mean of empty sequence")
    return sum(items, Fraction(0)) / len(items)
