"""Configurable unsigned floating-point emulation for probability arithmetic.

Values are 2**e * (1 + m / 2**M) with an E-bit biased exponent and an M-bit
fraction mantissa.  There is no sign bit (probabilities are non-negative) and
no subnormal range; zero is a reserved flag rather than an encoded value.
Every operation rounds exactly once and saturates out-of-range results,
reporting underflow/overflow through result flags.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

NEAREST_EVEN = "nearest-even"
TOWARD_ZERO = "toward-zero"

Real = Union[int, float, Fraction]


@dataclass(frozen=True)
class FloatConfig:
    """Width, bias and rounding mode of an unsigned float format."""

    exp_bits: int
    man_bits: int
    bias: int = None  # type: ignore[assignment]  # resolved in __post_init__
    rounding: str = NEAREST_EVEN

    def __post_init__(self) -> None:
        if self.exp_bits < 2:
            raise ValueError(f"exp_bits must be >= 2, got {self.exp_bits}")
        if self.man_bits < 0:
            raise ValueError(f"man_bits must be >= 0, got {self.man_bits}")
        if self.exp_bits + self.man_bits > 63:
            # the widest supported pattern must fit one 64-bit word
            raise ValueError("exp_bits + man_bits must be <= 63")
        if self.bias is None:
            object.__setattr__(self, "bias", (1 << (self.exp_bits - 1)) - 1)
        if self.rounding not in (NEAREST_EVEN, TOWARD_ZERO):
            raise ValueError(f"unknown rounding mode {self.rounding!r}")

    @property
    def man_scale(self) -> int:
        return 1 << self.man_bits

    @property
    def max_biased(self) -> int:
        return (1 << self.exp_bits) - 1

    @property
    def e_min(self) -> int:
        return -self.bias

    @property
    def e_max(self) -> int:
        return self.max_biased - self.bias

    @property
    def max_word(self) -> int:
        return (self.max_biased << self.man_bits) | (self.man_scale - 1)

    def max_value(self) -> "CustomFloat":
        return CustomFloat(False, self.e_max, self.man_scale - 1, self.man_bits)

    def min_positive(self) -> "CustomFloat":
        return CustomFloat(False, self.e_min, 0, self.man_bits)


@dataclass(frozen=True)
class CustomFloat:
    """One value: zero flag, unbiased exponent, mantissa numerator over 2**M."""

    is_zero: bool
    exponent: int
    mantissa: int
    man_bits: int

    def __post_init__(self) -> None:
        if not 0 <= self.mantissa < (1 << self.man_bits):
            raise ValueError(f"mantissa {self.mantissa} out of range for M={self.man_bits}")

    @classmethod
    def zero(cls, man_bits: int) -> "CustomFloat":
        return cls(True, 0, 0, man_bits)

    @classmethod
    def one(cls, man_bits: int) -> "CustomFloat":
        return cls(False, 0, 0, man_bits)

    @property
    def mantissa_fraction(self) -> float:
        return self.mantissa / (1 << self.man_bits)


@dataclass(frozen=True)
class MultResult:
    """Operation result plus saturation flags."""

    value: CustomFloat
    underflowed: bool = False
    overflowed: bool = False


#: IEEE double layout; the reference configuration for baseline evaluation.
FLOAT64 = FloatConfig(exp_bits=11, man_bits=52)


# ---------------------------------------------------------------------------
# rounding helpers
# ---------------------------------------------------------------------------

def _round_shifted(n: int, shift: int, mode: str) -> int:
    """Round n / 2**shift to an integer; single rounding step."""
    if shift <= 0:
        return n << -shift
    q, r = divmod(n, 1 << shift)
    if mode == TOWARD_ZERO:
        return q
    half = 1 << (shift - 1)
    if r > half or (r == half and q & 1):
        q += 1
    return q


def _round_fraction(fr: Fraction, mode: str) -> int:
    """Round a non-negative rational to an integer per mode."""
    q, r = divmod(fr.numerator, fr.denominator)
    if mode == TOWARD_ZERO:
        return q
    twice = 2 * r
    if twice > fr.denominator or (twice == fr.denominator and q & 1):
        q += 1
    return q


def _saturate(exponent: int, mantissa: int, cfg: FloatConfig) -> MultResult:
    if exponent < cfg.e_min:
        return MultResult(CustomFloat.zero(cfg.man_bits), underflowed=True)
    if exponent > cfg.e_max:
        return MultResult(cfg.max_value(), overflowed=True)
    return MultResult(CustomFloat(False, exponent, mantissa, cfg.man_bits))


# ---------------------------------------------------------------------------
# encode / decode
# ---------------------------------------------------------------------------

def encode(x: Real, cfg: FloatConfig) -> MultResult:
    """Quantize a non-negative real to cfg, rounding per cfg.rounding.

    Out-of-range magnitudes saturate: below the format to zero (underflow
    flag), above it to the largest value (overflow flag).
    """
    if isinstance(x, float) and not math.isfinite(x):
        raise ValueError(f"cannot encode non-finite value {x!r}")
    if x < 0:
        raise ValueError(f"cannot encode negative value {x!r}")
    frac = Fraction(x)
    if frac == 0:
        return MultResult(CustomFloat.zero(cfg.man_bits))

    e = _floor_log2(frac)
    sig = frac / Fraction(2) ** e  # in [1, 2)
    m = _round_fraction((sig - 1) * cfg.man_scale, cfg.rounding)
    if m == cfg.man_scale:  # mantissa rounded up past the top, renormalize
        m = 0
        e += 1
    return _saturate(e, m, cfg)


def decode(v: CustomFloat) -> float:
    """Exact real value of the representation (0.0 for the zero flag)."""
    if v.is_zero:
        return 0.0
    return math.ldexp((1 << v.man_bits) + v.mantissa, v.exponent - v.man_bits)


def decode_fraction(v: CustomFloat) -> Fraction:
    """Exact rational value; used by oracle-style checks."""
    if v.is_zero:
        return Fraction(0)
    return ((1 << v.man_bits) + v.mantissa) * Fraction(2) ** (v.exponent - v.man_bits)


def log2_value(v: CustomFloat) -> float:
    """log2 of the value, -inf for zero."""
    if v.is_zero:
        return float("-inf")
    return math.log2((1 << v.man_bits) + v.mantissa) + (v.exponent - v.man_bits)


def _floor_log2(x: Fraction) -> int:
    n, d = x.numerator, x.denominator
    e = n.bit_length() - d.bit_length()
    # bit lengths bound the ratio within a factor of two; fix up exactly
    if (n >> e if e >= 0 else n << -e) >= d:
        return e
    return e - 1


# ---------------------------------------------------------------------------
# arithmetic
# ---------------------------------------------------------------------------

def exact_mul(a: CustomFloat, b: CustomFloat, cfg: FloatConfig) -> MultResult:
    """Conventional float multiply: add exponents, full-width mantissa
    product, renormalize when the significand reaches 2, round once."""
    if a.is_zero or b.is_zero:
        return MultResult(CustomFloat.zero(cfg.man_bits))
    e = a.exponent + b.exponent
    prod = ((cfg.man_scale + a.mantissa) * (cfg.man_scale + b.mantissa))
    shift = cfg.man_bits
    if prod >= (1 << (2 * cfg.man_bits + 1)):  # (1+Ma)(1+Mb) >= 2
        e += 1
        shift += 1
    sig = _round_shifted(prod, shift, cfg.rounding)
    if sig == cfg.man_scale << 1:  # rounding overflowed the significand
        sig >>= 1
        e += 1
    return _saturate(e, sig - cfg.man_scale, cfg)


def exact_add(a: CustomFloat, b: CustomFloat, cfg: FloatConfig) -> MultResult:
    """Float add: align exponents, wide significand add, renormalize,
    round once per cfg.rounding."""
    if a.is_zero:
        return MultResult(b)
    if b.is_zero:
        return MultResult(a)
    e_lo = min(a.exponent, b.exponent)
    wide = (((cfg.man_scale + a.mantissa) << (a.exponent - e_lo))
            + ((cfg.man_scale + b.mantissa) << (b.exponent - e_lo)))
    top = wide.bit_length() - 1  # position of the leading one
    e = e_lo - cfg.man_bits + top
    sig = _round_shifted(wide, top - cfg.man_bits, cfg.rounding)
    if sig == cfg.man_scale << 1:
        sig >>= 1
        e += 1
    return _saturate(e, sig - cfg.man_scale, cfg)


def aai_mul(a: CustomFloat, b: CustomFloat, cfg: FloatConfig) -> MultResult:
    """Approximate multiply: mantissas add modulo 1, carry bumps the
    exponent, no rounding.  Never exceeds the exact product."""
    if a.is_zero or b.is_zero:
        return MultResult(CustomFloat.zero(cfg.man_bits))
    s = a.mantissa + b.mantissa
    carry = s >> cfg.man_bits
    return _saturate(a.exponent + b.exponent + carry, s & (cfg.man_scale - 1), cfg)


def mitchell_delta(f: float) -> float:
    """Pointwise log error log2(1+f) - f of the mantissa-addition shortcut."""
    if not 0.0 <= f <= 1.0:
        raise ValueError(f"mantissa fraction must be in [0, 1], got {f}")
    return max(math.log2(1.0 + f) - f, 0.0)


# ---------------------------------------------------------------------------
# bit-pattern interface
# ---------------------------------------------------------------------------

def to_bits(v: CustomFloat, cfg: FloatConfig) -> int:
    """Biased pattern (exponent field then mantissa field); zero maps to the
    reserved all-zeros word."""
    if v.man_bits != cfg.man_bits:
        raise ValueError("value mantissa width does not match config")
    if v.is_zero:
        return 0
    biased = v.exponent + cfg.bias
    if not 0 <= biased <= cfg.max_biased:
        raise ValueError(f"exponent {v.exponent} not representable under cfg")
    return (biased << cfg.man_bits) | v.mantissa


def from_bits(word: int, cfg: FloatConfig) -> CustomFloat:
    """Inverse of to_bits; the all-zeros word decodes to zero."""
    if not 0 <= word <= cfg.max_word:
        raise ValueError(f"pattern {word:#x} out of range for config")
    if word == 0:
        return CustomFloat.zero(cfg.man_bits)
    return CustomFloat(False, (word >> cfg.man_bits) - cfg.bias,
                       word & (cfg.man_scale - 1), cfg.man_bits)


def aai_mul_bits(a_bits: int, b_bits: int, cfg: FloatConfig) -> int:
    """Approximate multiply straight on bit patterns: integer-add the two
    words and subtract the duplicated bias.  Saturates like aai_mul."""
    for word in (a_bits, b_bits):
        if word == 0:
            raise ValueError("reserved zero pattern is not a valid operand")
        if not 0 < word <= cfg.max_word:
            raise ValueError(f"pattern {word:#x} out of range for config")
    r = a_bits + b_bits - (cfg.bias << cfg.man_bits)
    if r < 0:
        return 0  # underflow saturates to the zero word
    if r > cfg.max_word:
        return cfg.max_word
    return r
