"""Hot loops: counter-mode uniforms, dataset simulation, moment accumulation.

Each kernel exists twice, a numba ``@njit`` loop and a pure-numpy version.
The public names (``uniforms``, ``simulate``, ``accumulate``) dispatch to one
of them according to ``QNET_BACKEND`` (``numba`` or ``numpy``), read once at
import. Without numba installed the numpy versions are always used.

Distribution tables passed to ``simulate`` use these kind codes; placeholder
nodes carry ``KIND_ABSENT``.
"""
from __future__ import annotations

import os

import numpy as np

KIND_ABSENT = -1
KIND_CONSTANT = 0
KIND_GAUSSIAN = 1
KIND_BERNOULLI = 2
KIND_DISCRETE = 3

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO_POW_M53 = 2.0 ** -53
_TWO_PI = 2.0 * np.pi

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

HAVE_NUMBA = numba is not None
BACKEND = os.environ.get("QNET_BACKEND", "numba" if HAVE_NUMBA else "numpy").lower()
if BACKEND not in ("numba", "numpy"):
    raise ImportError(f"QNET_BACKEND must be 'numba' or 'numpy', got {BACKEND!r}")
if BACKEND == "numba" and not HAVE_NUMBA:
    BACKEND = "numpy"


# ---------------------------------------------------------------------------
# numpy versions


def _mix64_np(z):
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


def uniforms_numpy(key, start, count):
    k = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    z = _mix64_np(np.uint64(key) + k * _GAMMA)
    return (z >> _S11).astype(np.float64) * _TWO_POW_M53


def _choose(cum, size, u):
    idx = np.searchsorted(cum[:size], u, side="right")
    return np.minimum(idx, size - 1)


def simulate_numpy(key, start, n, sizes, cum_w, kinds, p1, p2, disc_vals, disc_cum, disc_len):
    c = sizes.shape[0]
    u = uniforms_numpy(key, start, n * 3 * c).reshape(n, 3 * c)
    paths = np.empty((n, c), dtype=np.int64)
    contrib = np.empty((n, c), dtype=np.float64)
    for j in range(c):
        rows = _choose(cum_w[j], sizes[j], u[:, j])
        paths[:, j] = rows
        u1 = u[:, c + 2 * j]
        u2 = u[:, c + 2 * j + 1]
        kind = kinds[rows, j]
        a = p1[rows, j]
        b = p2[rows, j]
        val = np.zeros(n)
        m = kind == KIND_CONSTANT
        val[m] = a[m]
        m = kind == KIND_GAUSSIAN
        if m.any():
            z = np.sqrt(-2.0 * np.log(1.0 - u1[m])) * np.cos(_TWO_PI * u2[m])
            val[m] = a[m] + np.sqrt(b[m]) * z
        m = kind == KIND_BERNOULLI
        val[m] = (u1[m] < a[m]).astype(np.float64)
        for i in np.unique(rows[kind == KIND_DISCRETE]):
            m = rows == i
            length = disc_len[i, j]
            pick = _choose(disc_cum[i, j], length, u1[m])
            val[m] = disc_vals[i, j, pick]
        contrib[:, j] = val
    # left-to-right sum, same order as the loop kernel
    quality = contrib[:, 0].copy()
    for j in range(1, c):
        quality += contrib[:, j]
    return paths, quality, contrib


def batch_moments(paths, x, r):
    """Per-node count and central moments (two-pass) of one batch."""
    n, c = paths.shape
    flat = (paths * c + np.arange(c)).ravel()
    xs = np.repeat(x, c)
    size = r * c
    count = np.bincount(flat, minlength=size)
    safe = np.maximum(count, 1)
    mean = np.bincount(flat, weights=xs, minlength=size) / safe
    dev = xs - mean[flat]
    d2 = dev * dev
    m2 = np.bincount(flat, weights=d2, minlength=size)
    m3 = np.bincount(flat, weights=d2 * dev, minlength=size)
    m4 = np.bincount(flat, weights=d2 * d2, minlength=size)
    shape = (r, c)
    return (count.reshape(shape), mean.reshape(shape), m2.reshape(shape),
            m3.reshape(shape), m4.reshape(shape))


def merge_moments(a, b):
    """Pairwise combination of (count, mean, M2, M3, M4) arrays."""
    na, ma, m2a, m3a, m4a = a
    nb, mb, m2b, m3b, m4b = b
    n = na + nb
    nf = n.astype(np.float64)
    naf = na.astype(np.float64)
    nbf = nb.astype(np.float64)
    safe = np.where(n > 0, nf, 1.0)
    delta = mb - ma
    d2 = delta * delta
    mean = np.where(n > 0, ma + delta * nbf / safe, 0.0)
    m2 = m2a + m2b + d2 * naf * nbf / safe
    m3 = (m3a + m3b + d2 * delta * naf * nbf * (naf - nbf) / (safe * safe)
          + 3.0 * delta * (naf * m2b - nbf * m2a) / safe)
    m4 = (m4a + m4b
          + d2 * d2 * naf * nbf * (naf * naf - naf * nbf + nbf * nbf) / (safe ** 3)
          + 6.0 * d2 * (naf * naf * m2b + nbf * nbf * m2a) / (safe * safe)
          + 4.0 * delta * (naf * m3b - nbf * m3a) / safe)
    # an empty side must leave the other untouched, bit for bit
    only_a = nb == 0
    only_b = na == 0
    for out, va, vb in ((mean, ma, mb), (m2, m2a, m2b), (m3, m3a, m3b), (m4, m4a, m4b)):
        out[only_a] = va[only_a]
        out[only_b] = vb[only_b]
    return n, mean, m2, m3, m4


def accumulate_numpy(paths, x, count, mean, m2, m3, m4):
    r = count.shape[0]
    batch = batch_moments(paths, x, r)
    out = merge_moments((count, mean, m2, m3, m4), batch)
    for dst, src in zip((count, mean, m2, m3, m4), out):
        dst[...] = src


# ---------------------------------------------------------------------------
# numba versions

if HAVE_NUMBA:
    _njit = numba.njit(cache=True, nogil=True)

    @_njit
    def _uniform_at(key, pos):
        z = key + np.uint64(pos + 1) * _GAMMA
        z = (z ^ (z >> _S30)) * _MIX1
        z = (z ^ (z >> _S27)) * _MIX2
        z = z ^ (z >> _S31)
        return np.float64(z >> _S11) * _TWO_POW_M53

    @_njit
    def uniforms_numba(key, start, count):
        key = np.uint64(key)
        out = np.empty(count, dtype=np.float64)
        for k in range(count):
            out[k] = _uniform_at(key, start + k)
        return out

    @_njit
    def _choose_scalar(cum, size, u):
        idx = 0
        while idx < size - 1 and u >= cum[idx]:
            idx += 1
        return idx

    @_njit
    def simulate_numba(key, start, n, sizes, cum_w, kinds, p1, p2, disc_vals, disc_cum, disc_len):
        key = np.uint64(key)
        c = sizes.shape[0]
        paths = np.empty((n, c), dtype=np.int64)
        contrib = np.empty((n, c), dtype=np.float64)
        quality = np.empty(n, dtype=np.float64)
        for k in range(n):
            base = start + k * 3 * c
            total = 0.0
            for j in range(c):
                i = _choose_scalar(cum_w[j], sizes[j], _uniform_at(key, base + j))
                paths[k, j] = i
                u1 = _uniform_at(key, base + c + 2 * j)
                u2 = _uniform_at(key, base + c + 2 * j + 1)
                kind = kinds[i, j]
                if kind == KIND_CONSTANT:
                    v = p1[i, j]
                elif kind == KIND_GAUSSIAN:
                    z = np.sqrt(-2.0 * np.log(1.0 - u1)) * np.cos(_TWO_PI * u2)
                    v = p1[i, j] + np.sqrt(p2[i, j]) * z
                elif kind == KIND_BERNOULLI:
                    v = 1.0 if u1 < p1[i, j] else 0.0
                else:
                    v = disc_vals[i, j, _choose_scalar(disc_cum[i, j], disc_len[i, j], u1)]
                contrib[k, j] = v
                if j == 0:
                    total = v
                else:
                    total += v
            quality[k] = total
        return paths, quality, contrib

    @_njit
    def accumulate_numba(paths, x, count, mean, m2, m3, m4):
        n, c = paths.shape
        for k in range(n):
            xv = x[k]
            for j in range(c):
                i = paths[k, j]
                n1 = count[i, j]
                nn = n1 + 1
                delta = xv - mean[i, j]
                dn = delta / nn
                dn2 = dn * dn
                term1 = delta * dn * n1
                mean[i, j] += dn
                m4[i, j] += (term1 * dn2 * (nn * nn - 3 * nn + 3)
                             + 6.0 * dn2 * m2[i, j] - 4.0 * dn * m3[i, j])
                m3[i, j] += term1 * dn * (nn - 2) - 3.0 * dn * m2[i, j]
                m2[i, j] += term1
                count[i, j] = nn
else:  # pragma: no cover
    uniforms_numba = simulate_numba = accumulate_numba = None


if BACKEND == "numba":
    uniforms = uniforms_numba
    simulate = simulate_numba
    accumulate = accumulate_numba
else:
    uniforms = uniforms_numpy
    simulate = simulate_numpy
    accumulate = accumulate_numpy
