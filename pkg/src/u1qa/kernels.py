"""Backend dispatch and array plumbing for the trajectory kernels.

The hot loops live in _kernels_numba.py (default) and _kernels_numpy.py
(fallback).  Selection: environment variable U1QA_BACKEND in {"numba",
"numpy"}; unset prefers numba and falls back to numpy if numba cannot be
imported.  Both produce bit-identical results; benchmarks/bench_kernels.py
compares their throughput.

Lane packing uses little-endian byte order inside uint64 words (lane ℓ of
word w is bit ℓ%64, byte-ordered as on x86), so uint8 views unpack
consistently.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .circuit import GATE_ALWAYS, KIND_CZ, LayerPlan, Realization


def _select_backend():
    choice = os.environ.get("U1QA_BACKEND", "").strip().lower()
    if choice not in ("", "numba", "numpy"):
        raise RuntimeError(f"U1QA_BACKEND must be 'numba' or 'numpy', got {choice!r}")
    if choice != "numpy":
        try:
            from . import _kernels_numba as impl
            return impl, "numba"
        except ImportError:
            if choice == "numba":
                raise
    from . import _kernels_numpy as impl
    return impl, "numpy"


_impl, BACKEND = _select_backend()


def get_backend() -> str:
    return BACKEND


def words_for(n_lanes: int) -> int:
    return (n_lanes + 63) // 64


def lane_mask(n_lanes: int) -> np.ndarray:
    """(W,) uint64 mask with only the first n_lanes lane bits set."""
    W = words_for(n_lanes)
    mask = np.full(W, np.uint64(0xFFFFFFFFFFFFFFFF), dtype=np.uint64)
    rem = n_lanes % 64
    if rem:
        mask[-1] = np.uint64((1 << rem) - 1)
    return mask


def pack_lanes(rows: np.ndarray) -> np.ndarray:
    """Pack a (n_lanes, L) uint8 bit matrix into (L, W) uint64 planes."""
    rows = np.ascontiguousarray(rows, dtype=np.uint8)
    n, L = rows.shape
    W = words_for(n)
    padded = np.zeros((W * 64, L), dtype=np.uint8)
    padded[:n] = rows
    packed = np.packbits(padded, axis=0, bitorder="little")  # (W*8, L) uint8
    return np.ascontiguousarray(packed.T).view(np.uint64)  # (L, W)


def unpack_lanes(planes: np.ndarray, n_lanes: int) -> np.ndarray:
    """Inverse of pack_lanes: (L, W) uint64 -> (n_lanes, L) uint8."""
    L = planes.shape[0]
    by = np.ascontiguousarray(planes).view(np.uint8)  # (L, W*8)
    bits = np.unpackbits(by, axis=1, bitorder="little")  # (L, W*64)
    return np.ascontiguousarray(bits[:, :n_lanes].T)


def unpack_word_vector(vec: np.ndarray, n_lanes: int) -> np.ndarray:
    """(W,) uint64 bit vector -> (n_lanes,) uint8."""
    by = np.ascontiguousarray(vec).view(np.uint8)
    return np.unpackbits(by, bitorder="little")[:n_lanes]


@dataclass
class PhaseRecord:
    """Per-record-step reductions from a phase kernel run."""

    rec_steps: np.ndarray
    n_lanes: int
    neg: np.ndarray    # lanes with sign product -1
    met: np.ndarray    # lanes met by the record step
    viol: np.ndarray   # unmet lanes with sign product -1 (must stay 0)

    @property
    def sign_sum(self) -> np.ndarray:
        return self.n_lanes - 2 * self.neg

    @property
    def unmet(self) -> np.ndarray:
        return self.n_lanes - self.met


def run_phase_pairs(real: Realization, roles: np.ndarray, rec_steps: np.ndarray, *,
                    track_meeting: bool, L_A: int | None = None,
                    sgn_window: tuple[int, int] | None = None,
                    cz_touch: bool = False) -> PhaseRecord:
    """Evolve (R, n_lanes, L) role bit matrices under one realization.

    roles[0]/roles[1] define the difference field when meeting is tracked;
    L_A splits the initial species labels.  sgn_window restricts which CZ
    supports contribute phase (default: all sites).
    """
    R, n_lanes, L = roles.shape
    if L != real.spec.part.L:
        raise ValueError("role matrix length does not match the model")
    rec_steps = _check_rec(rec_steps, real.t_max)
    bits = np.empty((R, L, words_for(n_lanes)), dtype=np.uint64)
    for r in range(R):
        bits[r] = pack_lanes(roles[r])
    W = bits.shape[2]
    sgn = np.zeros((R, W), dtype=np.uint64)
    if track_meeting:
        if L_A is None:
            raise ValueError("L_A is required when tracking meetings")
        h = bits[0] ^ bits[1]
        xlab = np.zeros((L, W), dtype=np.uint64)
        ylab = np.zeros((L, W), dtype=np.uint64)
        xlab[:L_A] = h[:L_A]
        ylab[L_A:] = h[L_A:]
    else:
        xlab = np.zeros((L, W), dtype=np.uint64)
        ylab = np.zeros((L, W), dtype=np.uint64)
    met = np.zeros(W, dtype=np.uint64)
    lo, hi = sgn_window if sgn_window is not None else (0, L - 1)
    mask = lane_mask(n_lanes)
    n_rec = len(rec_steps)
    out_neg = np.zeros(n_rec, dtype=np.int64)
    out_met = np.zeros(n_rec, dtype=np.int64)
    out_viol = np.zeros(n_rec, dtype=np.int64)
    _impl.phase_pairs(bits, sgn, real.ev_kind, real.ev_sites, real.ev_outcome,
                      real.step_ptr, rec_steps, lo, hi, 1 if cz_touch else 0,
                      1 if track_meeting else 0, xlab, ylab, met, mask,
                      out_neg, out_met, out_viol)
    return PhaseRecord(rec_steps=rec_steps, n_lanes=n_lanes,
                       neg=out_neg, met=out_met, viol=out_viol)


@dataclass
class FieldRecord:
    rec_steps: np.ndarray
    n_lanes: int
    count: np.ndarray          # total particles over lanes
    rightmost: np.ndarray | None  # (n_rec, n_lanes) site or -1


def run_field_pairs(real: Realization, roles: np.ndarray, rec_steps: np.ndarray, *,
                    want_rightmost: bool = False) -> FieldRecord:
    """Evolve a two-role pair, recording the difference-field statistics."""
    R, n_lanes, L = roles.shape
    if R != 2:
        raise ValueError("field kernel expects exactly two roles")
    rec_steps = _check_rec(rec_steps, real.t_max)
    bits = np.empty((2, L, words_for(n_lanes)), dtype=np.uint64)
    bits[0] = pack_lanes(roles[0])
    bits[1] = pack_lanes(roles[1])
    W = bits.shape[2]
    mask = lane_mask(n_lanes)
    n_rec = len(rec_steps)
    out_count = np.zeros(n_rec, dtype=np.int64)
    out_xt = np.full((n_rec, W * 64) if want_rightmost else (1, 1), -2, dtype=np.int32)
    _impl.field_pairs(bits, real.ev_kind, real.ev_sites, real.ev_outcome,
                      real.step_ptr, rec_steps, mask, 1 if want_rightmost else 0,
                      out_count, out_xt)
    return FieldRecord(rec_steps=rec_steps, n_lanes=n_lanes, count=out_count,
                       rightmost=out_xt[:, :n_lanes] if want_rightmost else None)


@dataclass
class CorrelationRecord:
    rec_steps: np.ndarray
    n_samples: int
    x_sites: np.ndarray
    prod_xor: np.ndarray  # (n_rec, nx) counts of bit(x,t) != bit(origin,0)
    z_count: np.ndarray   # (n_rec, nx) counts of bit(x,t) == 1
    z0_count: int         # count of bit(origin,0) == 1


def run_correlation(plan: LayerPlan, init_bits: np.ndarray, seed: int, t_max: int,
                    rec_steps: np.ndarray, x_sites: np.ndarray,
                    origin: int) -> CorrelationRecord:
    """One string per sample, fresh realization per sample (counter streams)."""
    rec_steps = _check_rec(rec_steps, t_max)
    init_bits = np.ascontiguousarray(init_bits, dtype=np.uint8).copy()
    keep = ~((plan.slot_kind == KIND_CZ) & (plan.slot_gating == GATE_ALWAYS))
    # CZ slots gated below 1.0 still consume a draw but never move bits;
    # keep them out too since the offsets stay valid either way.
    keep &= plan.slot_kind != KIND_CZ
    x_sites = np.asarray(x_sites, dtype=np.int64)
    n_rec = len(rec_steps)
    out_prod = np.zeros((n_rec, len(x_sites)), dtype=np.int64)
    out_z = np.zeros((n_rec, len(x_sites)), dtype=np.int64)
    out_z0 = np.zeros(1, dtype=np.int64)
    _impl.correlation_strings(init_bits, np.uint64(seed),
                              plan.slot_kind[keep], plan.slot_sites[keep],
                              plan.slot_gating[keep], plan.slot_draw_ofs[keep],
                              plan.draws_per_step, plan.spec.p_u, plan.spec.p,
                              t_max, rec_steps, x_sites, origin,
                              out_prod, out_z, out_z0)
    return CorrelationRecord(rec_steps=rec_steps, n_samples=init_bits.shape[0],
                             x_sites=x_sites, prod_xor=out_prod, z_count=out_z,
                             z0_count=int(out_z0[0]))


def _check_rec(rec_steps, t_max: int) -> np.ndarray:
    rec = np.asarray(rec_steps, dtype=np.int64)
    if len(rec) == 0:
        raise ValueError("need at least one record step")
    if np.any(np.diff(rec) <= 0):
        raise ValueError("record steps must be strictly increasing")
    if rec[0] < 0 or rec[-1] > t_max:
        raise ValueError(f"record steps outside [0, {t_max}]")
    return rec
