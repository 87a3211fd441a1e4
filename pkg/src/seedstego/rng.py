"""Deterministic, platform-independent pseudorandom streams.

Both communicating parties must reconstruct identical covers and decoder
weights from shared 64-bit seeds, so nothing here may depend on library
versions, platform word size, or global state.  The construction is frozen:

* Stream derivation: the 64-bit seed (little-endian bytes) concatenated with
  the UTF-8 stream label is hashed with FNV-1a (64-bit).  The digest seeds a
  SplitMix64 sequence whose first four outputs form the xoshiro256** state.
  Distinct labels therefore give independent streams from one seed.
* Generator: xoshiro256** (Blackman & Vigna), 256-bit state, all arithmetic
  modulo 2**64.
* Uniforms: the top 53 bits of each 64-bit output, scaled by 2**-53, giving
  doubles in [0, 1).
* Gaussians: Box-Muller on uniform pairs, with u1 mapped into (0, 1] so the
  logarithm is always finite.  Each call consumes whole pairs; for odd n the
  spare half of the last pair is discarded.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15


def _fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK64
    return h


def _splitmix64(state: int) -> tuple[int, int]:
    """One SplitMix64 step: returns (new_state, output)."""
    state = (state + _SPLITMIX_GAMMA) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    z ^= z >> 31
    return state, z


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class DeterministicRng:
    """xoshiro256** stream bound to a (seed, label) pair.

    The state is a pure function of the pair; two instances built from the
    same pair produce identical sequences on every platform.
    """

    __slots__ = ("seed", "label", "_s")

    def __init__(self, seed: int, label: str):
        if not 0 <= seed <= _MASK64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self.label = label
        h = _fnv1a64(seed.to_bytes(8, "little") + label.encode("utf-8"))
        state = h
        words = []
        for _ in range(4):
            state, z = _splitmix64(state)
            words.append(z)
        if not any(words):  # xoshiro must never start from the all-zero state
            words[0] = _SPLITMIX_GAMMA
        self._s = words

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s[1] << 17) & _MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def raw(self, n: int) -> list[int]:
        """Next n raw 64-bit outputs."""
        nxt = self.next_u64
        return [nxt() for _ in range(n)]

    def uniforms(self, n: int) -> np.ndarray:
        """n doubles uniform on [0, 1)."""
        u = np.array(self.raw(n), dtype=np.uint64)
        return ((u >> np.uint64(11)).astype(np.float64)) * 2.0**-53


def derive_stream(seed: int, label: str) -> DeterministicRng:
    """Create the pseudorandom stream identified by (seed, label)."""
    return DeterministicRng(seed, label)


def sample_gaussian(rng: DeterministicRng, n: int) -> np.ndarray:
    """n standard-normal draws via Box-Muller on the stream's uniforms."""
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    if n == 0:
        return np.empty(0, dtype=np.float64)
    pairs = (n + 1) // 2
    raw = np.array(rng.raw(2 * pairs), dtype=np.uint64)
    # u1 in (0, 1] keeps log finite; u2 in [0, 1)
    u1 = ((raw[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
    u2 = ((raw[1::2] >> np.uint64(11)).astype(np.float64)) * 2.0**-53
    r = np.sqrt(-2.0 * np.log(u1))
    theta = (2.0 * math.pi) * u2
    out = np.empty(2 * pairs, dtype=np.float64)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out[:n]
