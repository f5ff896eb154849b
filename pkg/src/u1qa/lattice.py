"""Bit strings, charge sectors, and samplers for every initial ensemble.

Bit strings are plain 1-d uint8 arrays of length L with entries in {0, 1}.
Sites are 0-based internally; documentation and file outputs use 1-based
site labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

Bits = np.ndarray


@dataclass(frozen=True)
class SectorSpec:
    """Initial ensemble: the full basis ("mixed") or one charge sector ("fixed")."""

    kind: str
    nu: Fraction | None = None

    def __post_init__(self):
        if self.kind not in ("mixed", "fixed"):
            raise ValueError(f"unknown sector kind {self.kind!r}")
        if self.kind == "fixed":
            if self.nu is None:
                raise ValueError("fixed sector requires a filling fraction nu")
            if not 0 <= self.nu <= 1:
                raise ValueError(f"nu={self.nu} outside [0, 1]")
        elif self.nu is not None:
            raise ValueError("mixed sector takes no filling fraction")

    def charge(self, L: int) -> int:
        """Total charge Q = nu * L; raises unless it is an integer."""
        if self.kind != "fixed":
            raise ValueError("charge is only defined for a fixed sector")
        q = self.nu * L
        if q.denominator != 1:
            raise ValueError(f"nu*L = {q} is not an integer (L={L}, nu={self.nu})")
        return int(q)


@dataclass(frozen=True)
class Partition:
    """Bipartition of an L-site chain into A = sites 1..L_A and B = the rest."""

    L: int
    L_A: int
    boundary: str = "periodic"

    def __post_init__(self):
        if self.L < 2:
            raise ValueError(f"L={self.L} too small")
        if not 1 <= self.L_A < self.L:
            raise ValueError(f"L_A={self.L_A} must satisfy 1 <= L_A < L={self.L}")
        if self.boundary not in ("open", "periodic"):
            raise ValueError(f"unknown boundary {self.boundary!r}")

    @property
    def L_B(self) -> int:
        return self.L - self.L_A


def charge(bits: Bits) -> int:
    """Number of occupied sites (Hamming weight)."""
    return int(np.asarray(bits).sum())


def charge_a(bits: Bits, L_A: int) -> int:
    """Charge restricted to subsystem A (the first L_A sites)."""
    return int(np.asarray(bits)[:L_A].sum())


def sector_size(L: int, Q: int) -> int:
    """Number of bit strings of length L with charge Q, exact to large L."""
    if not 0 <= Q <= L:
        raise ValueError(f"charge Q={Q} outside [0, {L}]")
    return math.comb(L, Q)


def log_sector_size(L: int, Q: int) -> float:
    """log C(L, Q) through log-gamma, for ratios too large for floats."""
    if not 0 <= Q <= L:
        raise ValueError(f"charge Q={Q} outside [0, {L}]")
    return math.lgamma(L + 1) - math.lgamma(Q + 1) - math.lgamma(L - Q + 1)


def sample_bitstring(L: int, sector: SectorSpec, rng: np.random.Generator) -> Bits:
    """One bit string: i.i.d. fair bits (mixed) or uniform at fixed charge."""
    if sector.kind == "mixed":
        return rng.integers(0, 2, size=L, dtype=np.uint8)
    Q = sector.charge(L)
    bits = np.zeros(L, dtype=np.uint8)
    bits[:Q] = 1
    rng.shuffle(bits)
    return bits


def sample_fixed_batch(L: int, Q: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """(n, L) matrix of independent uniform charge-Q strings.

    Each row is a weight-Q template shuffled in place (Fisher-Yates per row),
    which is exactly uniform over the sector.
    """
    if not 0 <= Q <= L:
        raise ValueError(f"charge Q={Q} outside [0, {L}]")
    rows = np.broadcast_to((np.arange(L) < Q).astype(np.uint8), (n, L))
    return rng.permuted(rows, axis=1)


def sample_fixed_batch_var(L: int, Qs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Like sample_fixed_batch but with a per-row charge."""
    rows = (np.arange(L)[None, :] < np.asarray(Qs)[:, None]).astype(np.uint8)
    return rng.permuted(rows, axis=1)


def _split_log_weights(part: Partition, Q: int) -> tuple[np.ndarray, np.ndarray]:
    """Valid A-charges and log of C(L_A, q) * C(L_B, Q - q) for each."""
    q_lo = max(0, Q - part.L_B)
    q_hi = min(part.L_A, Q)
    if q_lo > q_hi:
        raise ValueError(f"empty sector: no valid A-charge for Q={Q}, {part}")
    qs = np.arange(q_lo, q_hi + 1)
    logw = np.array(
        [log_sector_size(part.L_A, q) + log_sector_size(part.L_B, Q - q) for q in qs]
    )
    return qs, logw


def sample_charge_split(part: Partition, Q: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """n draws of the A-charge with probability proportional to the squared
    number of (A, B) completions, the marginal of the constrained pair set."""
    qs, logw = _split_log_weights(part, Q)
    w = np.exp(2.0 * (logw - logw.max()))
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    return qs[np.searchsorted(cdf, rng.random(n), side="right")]


def sample_pair_constrained(
    part: Partition, nu: Fraction, rng: np.random.Generator
) -> tuple[Bits, Bits]:
    """Uniform draw from the pair set with equal total and equal A charges."""
    n1, n2 = sample_pair_constrained_batch(part, nu, 1, rng)
    return n1[0], n2[0]


def sample_pair_constrained_batch(
    part: Partition, nu: Fraction, n: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """n uniform draws from the constrained pair set, as two (n, L) matrices."""
    Q = SectorSpec("fixed", nu).charge(part.L)
    qa = sample_charge_split(part, Q, n, rng)
    a1 = sample_fixed_batch_var(part.L_A, qa, rng)
    a2 = sample_fixed_batch_var(part.L_A, qa, rng)
    b1 = sample_fixed_batch_var(part.L_B, Q - qa, rng)
    b2 = sample_fixed_batch_var(part.L_B, Q - qa, rng)
    return np.hstack([a1, b1]), np.hstack([a2, b2])


def constrained_set_size(part: Partition, nu: Fraction) -> int:
    """Exact cardinality of the constrained pair set (a big integer)."""
    Q = SectorSpec("fixed", nu).charge(part.L)
    q_lo = max(0, Q - part.L_B)
    q_hi = min(part.L_A, Q)
    return sum(
        (math.comb(part.L_A, q) * math.comb(part.L_B, Q - q)) ** 2
        for q in range(q_lo, q_hi + 1)
    )


def swap_a(n1: Bits, n2: Bits, L_A: int) -> tuple[Bits, Bits]:
    """Exchange the first L_A sites between two strings."""
    n1 = np.asarray(n1)
    n2 = np.asarray(n2)
    if n1.shape != n2.shape:
        raise ValueError("swap_a requires equal-length strings")
    n1p = np.concatenate([n2[:L_A], n1[L_A:]])
    n2p = np.concatenate([n1[:L_A], n2[L_A:]])
    return n1p, n2p


def make_dead_region(
    part: Partition, nu_a: Fraction, rng: np.random.Generator
) -> tuple[Bits, Bits]:
    """Pair of strings with independent fixed-charge A halves and an all-zero B.

    The all-zero block is the slow-mode configuration whose boundary charge
    moves diffusively; the pair's difference field lives entirely in A.
    """
    qa = Fraction(nu_a) * part.L_A
    if qa.denominator != 1:
        raise ValueError(f"nu_A * L_A = {qa} is not an integer")
    qa = int(qa)
    n1 = np.zeros(part.L, dtype=np.uint8)
    n2 = np.zeros(part.L, dtype=np.uint8)
    n1[:part.L_A] = sample_fixed_batch(part.L_A, qa, 1, rng)[0]
    n2[:part.L_A] = sample_fixed_batch(part.L_A, qa, 1, rng)[0]
    return n1, n2


def make_dead_region_batch(
    part: Partition, nu_a: Fraction, n: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Batch version of make_dead_region: two (n, L) matrices."""
    qa = Fraction(nu_a) * part.L_A
    if qa.denominator != 1:
        raise ValueError(f"nu_A * L_A = {qa} is not an integer")
    qa = int(qa)
    n1 = np.zeros((n, part.L), dtype=np.uint8)
    n2 = np.zeros((n, part.L), dtype=np.uint8)
    n1[:, :part.L_A] = sample_fixed_batch(part.L_A, qa, n, rng)
    n2[:, :part.L_A] = sample_fixed_batch(part.L_A, qa, n, rng)
    return n1, n2
