"""Special functions and the seeded random stream.

Everything here is self-contained so that p-values and simulated datasets do
not depend on which scipy build happens to be installed. Only ``math`` is used
for elementary functions.

Random stream
-------------
The generator is SplitMix64 used in counter mode (id ``splitmix64-ctr-v1``).
Draw ``k`` (0-based) of a stream with seed ``s`` is::

    key = mix64(s mod 2**64)
    z_k = mix64(key + (k + 1) * 0x9E3779B97F4A7C15  mod 2**64)
    u_k = (z_k >> 11) * 2**-53

so any position can be computed without stepping through the previous ones.
The vectorised kernels in :mod:`qnet._kernels` rely on that property.
"""
from __future__ import annotations

import math

import numpy as np

GENERATOR_ID = "splitmix64-ctr-v1"

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_TWO_POW_M53 = 2.0 ** -53

_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.91893853320467274178
_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 10_000


def mix64(z: int) -> int:
    """SplitMix64 finaliser on a Python int, result in [0, 2**64)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def stream_key(seed: int) -> int:
    return mix64(seed & MASK64)


class RandomStream:
    """Single-owner, deterministic stream of uniforms.

    ``position`` counts uniforms consumed so far. Every normal draw consumes
    exactly two uniforms (Box-Muller, cosine branch only), bernoulli draws one.
    """

    generator = GENERATOR_ID

    def __init__(self, seed: int, position: int = 0):
        self.seed = int(seed)
        self.key = stream_key(self.seed)
        self.position = int(position)

    def spawn(self, worker: int) -> "RandomStream":
        """Independent stream for worker ``worker`` (seed + worker index)."""
        return RandomStream(self.seed + worker)

    def uniform(self) -> float:
        self.position += 1
        z = mix64(self.key + self.position * GOLDEN_GAMMA)
        return (z >> 11) * _TWO_POW_M53

    def uniforms(self, count: int) -> np.ndarray:
        from qnet import _kernels

        out = _kernels.uniforms(np.uint64(self.key), self.position, count)
        self.position += count
        return out

    def normal(self) -> float:
        return box_muller(self.uniform(), self.uniform())

    def bernoulli(self, p: float) -> int:
        return 1 if self.uniform() < p else 0


def uniform_draw(stream: RandomStream) -> float:
    return stream.uniform()


def normal_draw(stream: RandomStream) -> float:
    return stream.normal()


def bernoulli_draw(stream: RandomStream, p: float) -> int:
    return stream.bernoulli(p)


def box_muller(u1: float, u2: float) -> float:
    # 1 - u1 lies in (0, 1], so the log is finite
    return math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(2.0 * math.pi * u2)


# ---------------------------------------------------------------------------
# special functions


def log_gamma(x: float) -> float:
    """log|Gamma(x)| by the Lanczos approximation (g=7, 9 terms)."""
    if x <= 0 and x == math.floor(x):
        raise ValueError("log_gamma is undefined at non-positive integers")
    if x < 0.5:
        # reflection formula
        return math.log(math.pi / abs(math.sin(math.pi * x))) - log_gamma(1.0 - x)
    x -= 1.0
    acc = _LANCZOS_COEF[0]
    for k in range(1, len(_LANCZOS_COEF)):
        acc += _LANCZOS_COEF[k] / (x + k)
    t = x + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (x + 0.5) * math.log(t) - t + math.log(acc)


def _gamma_prefactor(a: float, x: float) -> float:
    return math.exp(-x + a * math.log(x) - log_gamma(a))


def _gamma_p_series(a: float, x: float) -> float:
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * _gamma_prefactor(a, x)


def _gamma_q_contfrac(a: float, x: float) -> float:
    # modified Lentz evaluation of the continued fraction for Q(a, x)
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h * _gamma_prefactor(a, x)


def gamma_p(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x)."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 0.0
    if x < a + 1.0:
        return min(1.0, _gamma_p_series(a, x))
    return max(0.0, 1.0 - _gamma_q_contfrac(a, x))


def gamma_q(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x)."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _gamma_p_series(a, x))
    return min(1.0, _gamma_q_contfrac(a, x))


def erfc(x: float) -> float:
    if x < 0:
        return 2.0 - erfc(-x)
    return gamma_q(0.5, x * x)


def erf(x: float) -> float:
    if x < 0:
        return -erf(-x)
    return gamma_p(0.5, x * x)


_INV_SQRT2 = 0.70710678118654752440


def std_normal_cdf(x: float) -> float:
    return 0.5 * erfc(-x * _INV_SQRT2)


def std_normal_sf(x: float) -> float:
    """Upper tail 1 - Phi(x), accurate far into the tail."""
    return 0.5 * erfc(x * _INV_SQRT2)


def two_sided_normal_p(z: float) -> float:
    if math.isnan(z):
        raise ValueError("z is NaN")
    return min(1.0, 2.0 * std_normal_sf(abs(z)))


def chi_square_sf(x: float, k: int) -> float:
    """Upper-tail probability of a chi-square variable with ``k`` degrees of freedom."""
    if k < 1:
        raise ValueError("degrees of freedom must be >= 1")
    if x < 0:
        raise ValueError("x must be non-negative")
    return gamma_q(0.5 * k, 0.5 * x)
