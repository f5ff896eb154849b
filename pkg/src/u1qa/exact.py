"""Exact small-system oracle over sign states.

Every gate in the three models maps an equal-weight superposition with ±1
amplitudes to another one, so the full state is one sign per basis element.
The oracle evolves those signs exactly and computes reduced purities,
providing the ground truth for the Monte Carlo estimators.

Comparison convention: the trajectory engine consumes an event list first
event first, which evaluates basis-state amplitudes of the circuit whose
operators are composed in the opposite order (the last processed event acts
on the initial state first).  Cross-engine checks therefore evolve the
oracle through the reversed event prefix for each recorded step; see
exhaustive_vs_oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .circuit import (
    KIND_CSWAP4,
    KIND_CZ,
    KIND_FREDKIN,
    KIND_MEASURE,
    KIND_SWAP,
    Realization,
)
from .lattice import Partition, SectorSpec, sector_size

_MAX_L = 20


@dataclass
class SignState:
    """Equal-weight state: one ±1 sign per basis code (site i = bit i)."""

    L: int
    codes: np.ndarray  # uint32, sorted
    signs: np.ndarray  # int8, aligned with codes
    rank: np.ndarray   # int32 lookup of size 2**L, -1 off-basis

    @property
    def n(self) -> int:
        return len(self.codes)

    def copy(self) -> "SignState":
        return SignState(self.L, self.codes, self.signs.copy(), self.rank)


def make_sign_state(L: int, sector: SectorSpec) -> SignState:
    """The initial all-plus state over the full basis or one charge sector."""
    if L > _MAX_L:
        raise ValueError(f"oracle limited to L <= {_MAX_L}, got {L}")
    all_codes = np.arange(1 << L, dtype=np.uint32)
    if sector.kind == "mixed":
        codes = all_codes
    else:
        Q = sector.charge(L)
        codes = all_codes[np.bitwise_count(all_codes) == Q]
    rank = np.full(1 << L, -1, dtype=np.int32)
    rank[codes] = np.arange(len(codes), dtype=np.int32)
    return SignState(L=L, codes=codes, signs=np.ones(len(codes), dtype=np.int8),
                     rank=rank)


def _bit(codes: np.ndarray, site: int) -> np.ndarray:
    return (codes >> np.uint32(site)) & np.uint32(1)


def apply_event_exact(st: SignState, kind: int, sites: np.ndarray, outcome: int) -> None:
    """Apply one event to the sign state in place.

    Permutation gates relabel basis elements (sign travels with the string),
    CZ flips signs on doubly-occupied supports, and a measurement overwrites
    the signs of the discarded anti-parallel branch with its partner's.
    """
    codes = st.codes
    if kind == KIND_CZ:
        both = (_bit(codes, sites[0]) & _bit(codes, sites[1])) == 1
        st.signs[both] *= -1
        return
    if kind == KIND_MEASURE:
        i, j = int(sites[0]), int(sites[1])
        bi, bj = _bit(codes, i), _bit(codes, j)
        if outcome == 1:
            target = (bi == 1) & (bj == 0)  # overwritten from the (0,1) partner
        else:
            target = (bi == 0) & (bj == 1)
        partner = codes[target] ^ np.uint32((1 << i) | (1 << j))
        st.signs[target] = st.signs[st.rank[partner]]
        return
    if kind == KIND_FREDKIN:
        a, b, c = (int(s) for s in sites[:3])
        mid = _bit(codes, b)
        diff = (_bit(codes, a) ^ _bit(codes, c)) & mid
        new_codes = codes ^ (diff << np.uint32(a)) ^ (diff << np.uint32(c))
    elif kind == KIND_SWAP:
        a, b = int(sites[0]), int(sites[1])
        diff = _bit(codes, a) ^ _bit(codes, b)
        new_codes = codes ^ (diff << np.uint32(a)) ^ (diff << np.uint32(b))
    elif kind == KIND_CSWAP4:
        a, b, c, d = (int(s) for s in sites[:4])
        cond = (np.uint32(1) - _bit(codes, a)) | _bit(codes, d)
        diff = (_bit(codes, b) ^ _bit(codes, c)) & cond
        new_codes = codes ^ (diff << np.uint32(b)) ^ (diff << np.uint32(c))
    else:
        raise ValueError(f"unknown event kind {kind}")
    # state sum_n s_n |n> -> sum_n s_n |pi(n)>
    new_signs = np.empty_like(st.signs)
    new_signs[st.rank[new_codes]] = st.signs
    st.signs = new_signs


def evolve_exact(real: Realization, st: SignState, *, n_events: int | None = None,
                 reverse: bool = False) -> SignState:
    """Apply (a prefix of) a realization's events to a sign state.

    reverse=True applies the selected prefix in reversed event order, which
    is the composition the trajectory engine's phase accounting corresponds
    to.  Returns the mutated state for chaining.
    """
    k_max = real.n_events if n_events is None else int(n_events)
    order = range(k_max - 1, -1, -1) if reverse else range(k_max)
    for k in order:
        apply_event_exact(st, int(real.ev_kind[k]), real.ev_sites[k],
                          int(real.ev_outcome[k]))
    return st


def purity_exact(st: SignState, L_A: int) -> float:
    """Tr rho_A^2 of the equal-weight sign state, exact in integer arithmetic."""
    if not 1 <= L_A < st.L:
        raise ValueError(f"L_A={L_A} outside [1, {st.L - 1}]")
    a = (st.codes & np.uint32((1 << L_A) - 1)).astype(np.int64)
    b = (st.codes >> np.uint32(L_A)).astype(np.int64)
    a_ids, a_idx = np.unique(a, return_inverse=True)
    b_ids, b_idx = np.unique(b, return_inverse=True)
    m = np.zeros((len(a_ids), len(b_ids)), dtype=np.float64)
    m[a_idx, b_idx] = st.signs
    g = m @ m.T
    return float(np.sum(g * g)) / st.n**2


def born_probability(st: SignState, sites: tuple[int, int]) -> float:
    """Norm square of the outcome-1 Kraus branch on the given site pair."""
    i, j = sites
    bi, bj = _bit(st.codes, i), _bit(st.codes, j)
    n00 = int(np.sum((bi == 0) & (bj == 0)))
    n01 = int(np.sum((bi == 0) & (bj == 1)))
    n11 = int(np.sum((bi == 1) & (bj == 1)))
    return (0.5 * n00 + n01 + 0.5 * n11) / st.n


def enumerate_pairs_mixed(L: int) -> tuple[np.ndarray, np.ndarray]:
    """All 4**L ordered pairs of basis codes."""
    codes = np.arange(1 << L, dtype=np.uint32)
    n1 = np.repeat(codes, 1 << L)
    n2 = np.tile(codes, 1 << L)
    return n1, n2


def enumerate_pairs_constrained(part: Partition, nu) -> tuple[np.ndarray, np.ndarray]:
    """All pairs with equal total charge nu*L and equal A charge."""
    Q = SectorSpec("fixed", nu).charge(part.L)
    acodes = np.arange(1 << part.L_A, dtype=np.uint32)
    bcodes = np.arange(1 << part.L_B, dtype=np.uint32)
    n1_list, n2_list = [], []
    for qa in range(max(0, Q - part.L_B), min(part.L_A, Q) + 1):
        al = acodes[np.bitwise_count(acodes) == qa]
        bl = bcodes[np.bitwise_count(bcodes) == Q - qa]
        if len(al) == 0 or len(bl) == 0:
            continue
        half1 = (np.repeat(al, len(bl)) | (np.tile(bl, len(al)) << np.uint32(part.L_A)))
        k = len(half1)
        n1_list.append(np.repeat(half1, k))
        n2_list.append(np.tile(half1, k))
    return np.concatenate(n1_list), np.concatenate(n2_list)


def codes_to_rows(codes: np.ndarray, L: int) -> np.ndarray:
    """(n,) basis codes -> (n, L) uint8 bit matrix (site i = bit i)."""
    out = np.empty((len(codes), L), dtype=np.uint8)
    for s in range(L):
        out[:, s] = (codes >> np.uint32(s)) & np.uint32(1)
    return out


def exhaustive_phase_purity(real: Realization, sector: SectorSpec,
                            rec_steps: np.ndarray) -> np.ndarray:
    """Exact purity series from the trajectory engine summed over all pairs."""
    part = real.spec.part
    L = part.L
    if sector.kind == "mixed":
        c1, c2 = enumerate_pairs_mixed(L)
        denom = float(4 ** L)
    else:
        c1, c2 = enumerate_pairs_constrained(part, sector.nu)
        denom = float(sector_size(L, sector.charge(L))) ** 2
    r1 = codes_to_rows(c1, L)
    r2 = codes_to_rows(c2, L)
    r1p = np.hstack([r2[:, :part.L_A], r1[:, part.L_A:]])
    r2p = np.hstack([r1[:, :part.L_A], r2[:, part.L_A:]])
    roles = np.stack([r1, r2, r1p, r2p])
    rec = kernels.run_phase_pairs(real, roles, rec_steps, track_meeting=False)
    return rec.sign_sum.astype(np.float64) / denom


def oracle_purity_series(real: Realization, sector: SectorSpec,
                         rec_steps: np.ndarray, L_A: int) -> np.ndarray:
    """Oracle purities matching the engine's per-step accounting.

    The engine's value at record step t is the purity of the state built by
    applying the first k_t events in reversed order, so each step gets a
    fresh reversed-prefix evolution.
    """
    out = np.empty(len(rec_steps), dtype=np.float64)
    for i, t in enumerate(np.asarray(rec_steps)):
        st = make_sign_state(real.spec.part.L, sector)
        evolve_exact(real, st, n_events=int(real.step_ptr[int(t)]), reverse=True)
        out[i] = purity_exact(st, L_A)
    return out


def exhaustive_vs_oracle(real: Realization, sector: SectorSpec,
                         rec_steps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(engine purities, oracle purities) at the recorded steps."""
    engine = exhaustive_phase_purity(real, sector, rec_steps)
    oracle = oracle_purity_series(real, sector, rec_steps, real.spec.part.L_A)
    return engine, oracle
