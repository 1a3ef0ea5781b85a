"""Seed-addressed Brownian increments with exact coarsening.

Every random number is addressed by ``(base_seed, stream, path_index,
channel, step)``.  A Philox4x64 counter-based generator is keyed by the first
four fields (hashed through ``numpy.random.SeedSequence``) and the ``step``
selects the draw position, so any block of steps can be produced without
generating the preceding ones and without shared generator state.

Gaussians are produced by inverse CDF: the 64-bit raw word ``r`` becomes the
uniform ``((r >> 11) + 0.5) * 2**-53`` and then ``scipy.special.ndtri``.  Each
increment is finally rounded to a multiple of ``QUANTUM`` (2**-46).  Sums of
such values are exact in float64 while partial sums stay below 128 in
magnitude, which makes block sums independent of summation order: coarsening
is associative and coarse partial sums equal fine partial sums bit-for-bit.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import ConfigError, GridMismatch

QUANTUM = 2.0 ** -46
SEED_ENV_VAR = "TRUNCEM_SEED"

# disjoint key subspaces
STREAM_BROWNIAN = 0
STREAM_SUBORDINATOR = 1
STREAM_PROBE = 2

_UINT64_MAX = 2 ** 64 - 1


def check_seed(seed):
    seed = int(seed)
    if not 0 <= seed <= _UINT64_MAX:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def seed_from_env(default=None):
    """Return the seed from ``TRUNCEM_SEED`` if set, else ``default``."""
    value = os.environ.get(SEED_ENV_VAR)
    if value is None or value.strip() == "":
        return default
    try:
        return check_seed(int(value.strip(), 0))
    except ValueError as exc:
        raise ConfigError(f"{SEED_ENV_VAR}={value!r} is not an unsigned 64-bit integer") from exc


def stream_key(base_seed, stream, path_index, channel=0):
    """128-bit Philox key for one independent stream."""
    ss = np.random.SeedSequence([check_seed(base_seed), int(stream), int(path_index), int(channel)])
    return ss.generate_state(2, np.uint64)


def raw_words(key, start, count):
    """Raw 64-bit words ``start .. start+count-1`` of the stream with ``key``."""
    bitgen = np.random.Philox(key=key)
    block, skip = divmod(int(start), 4)
    if block:
        bitgen.advance(block)
    words = bitgen.random_raw(skip + int(count))
    return words[skip:]


def uniforms(key, start, count):
    """Open-interval uniforms on (0, 1), one per raw word."""
    words = raw_words(key, start, count)
    return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def quantize(values):
    return np.rint(np.asarray(values, dtype=np.float64) * (1.0 / QUANTUM)) * QUANTUM


def gaussian_increments(base_seed, path_index, channel, dt, start, count):
    """Quantized Normal(0, dt) increments for steps ``start .. start+count-1``."""
    key = stream_key(base_seed, STREAM_BROWNIAN, path_index, channel)
    z = ndtri(uniforms(key, start, count))
    return quantize(z * math.sqrt(dt))


def brownian_block(base_seed, path_indices, m, dt, start, count):
    """Increments for many paths at once, shape ``(n_paths, count, m)``."""
    path_indices = np.atleast_1d(path_indices)
    out = np.empty((len(path_indices), int(count), int(m)))
    for i, p in enumerate(path_indices):
        for r in range(m):
            out[i, :, r] = gaussian_increments(base_seed, p, r, dt, start, count)
    return out


@dataclass(frozen=True)
class BrownianPath:
    """Brownian increments on a uniform grid.

    ``increments[r, k]`` is ``W^r(t_{k+1}) - W^r(t_k)`` with ``t_k = t0 + k*dt``.
    """

    dt: float
    increments: np.ndarray
    seed_lineage: tuple = (None, None)
    t0: float = 0.0

    @property
    def n_steps(self):
        return self.increments.shape[1]

    @property
    def channels(self):
        return self.increments.shape[0]

    def values(self):
        """``W(t_k)`` for k = 0..n_steps, shape ``(m, n_steps + 1)``."""
        w = np.zeros((self.channels, self.n_steps + 1))
        np.cumsum(self.increments, axis=1, out=w[:, 1:])
        return w


def generate_brownian(m, dt, n_steps, base_seed, path_index, t0=0.0):
    if not dt > 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    if int(n_steps) < 1:
        raise ConfigError(f"n_steps must be >= 1, got {n_steps}")
    inc = np.empty((int(m), int(n_steps)))
    for r in range(int(m)):
        inc[r] = gaussian_increments(base_seed, path_index, r, dt, 0, n_steps)
    return BrownianPath(float(dt), inc, (check_seed(base_seed), int(path_index)), float(t0))


def block_sum(increments, factor, axis=-1):
    """Sum consecutive blocks of ``factor`` entries along ``axis``."""
    factor = int(factor)
    a = np.moveaxis(np.asarray(increments), axis, -1)
    n = a.shape[-1]
    if factor < 1 or n % factor:
        raise GridMismatch(f"factor {factor} does not divide {n} steps")
    if factor == 1:
        return np.moveaxis(a.copy(), -1, axis)
    # left-to-right accumulation; exact anyway for quantized input
    blocks = a.reshape(a.shape[:-1] + (n // factor, factor))
    out = blocks[..., 0].copy()
    for j in range(1, factor):
        out += blocks[..., j]
    return np.moveaxis(out, -1, axis)


def coarsen_brownian(path, factor):
    factor = int(factor)
    if factor < 1 or path.n_steps % factor:
        raise GridMismatch(f"factor {factor} does not divide n_steps={path.n_steps}")
    return BrownianPath(path.dt * factor, block_sum(path.increments, factor, axis=1),
                        path.seed_lineage, path.t0)


def integer_ratio(coarse, fine, rel_tol=1e-9):
    """Return ``k`` with ``coarse == k * fine`` up to ``rel_tol``, else raise."""
    k = round(coarse / fine)
    if k < 1 or abs(k * fine - coarse) > rel_tol * coarse:
        raise GridMismatch(f"step {coarse!r} is not an integer multiple of {fine!r}")
    return int(k)


def n_grid_steps(length, dt, rel_tol=1e-9):
    """Number of whole steps of size ``dt`` in ``length`` and the leftover length.

    A ratio within ``rel_tol`` of an integer counts as exact, so that 1/1e-3
    gives 1000 steps and no sliver step.
    """
    ratio = length / dt
    n = round(ratio)
    if abs(ratio - n) <= rel_tol * max(1.0, ratio):
        return int(n), 0.0
    n = math.floor(ratio)
    return int(n), length - n * dt
