"""Pure-numpy implementations of the trajectory kernels.

Same contracts and bit-exact outputs as _kernels_numba.py, selected with
U1QA_BACKEND=numpy.  Events are applied one at a time with vectorised word
operations; the correlation kernel vectorises across samples instead, which
is only possible because draws are counter-addressed.
"""

from __future__ import annotations

import numpy as np

from . import rng as _rng
from .circuit import GATE_MEAS, GATE_PU

_U1 = np.uint64(1)


def _popcount(arr: np.ndarray) -> int:
    return int(np.bitwise_count(arr).sum())


def _apply_gate_planes(bits, kind, s0, s1, s2, s3, outcome):
    if kind == 0:
        d = (bits[:, s0, :] ^ bits[:, s2, :]) & bits[:, s1, :]
        bits[:, s0, :] ^= d
        bits[:, s2, :] ^= d
    elif kind == 1:
        t = bits[:, s0, :].copy()
        bits[:, s0, :] = bits[:, s1, :]
        bits[:, s1, :] = t
    elif kind == 3:
        cond = (~bits[:, s0, :]) | bits[:, s3, :]
        d = (bits[:, s1, :] ^ bits[:, s2, :]) & cond
        bits[:, s1, :] ^= d
        bits[:, s2, :] ^= d
    else:
        d = bits[:, s0, :] ^ bits[:, s1, :]
        if outcome == 1:
            bits[:, s0, :] &= ~d
            bits[:, s1, :] |= d
        else:
            bits[:, s0, :] |= d
            bits[:, s1, :] &= ~d


def phase_pairs(bits, sgn, ev_kind, ev_sites, ev_outcome, step_ptr, rec_steps,
                sgn_lo, sgn_hi, cz_touch, track, xlab, ylab, met, lane_mask,
                out_neg, out_met, out_viol):
    t_max = len(step_ptr) - 1
    n_rec = len(rec_steps)
    ri = 0

    def _record(i):
        prod = np.bitwise_xor.reduce(sgn, axis=0)
        out_neg[i] = _popcount(prod & lane_mask)
        out_met[i] = _popcount(met & lane_mask)
        out_viol[i] = _popcount(prod & ~met & lane_mask)

    if n_rec > 0 and rec_steps[0] == 0:
        _record(0)
        ri = 1

    for t in range(1, t_max + 1):
        for k in range(step_ptr[t - 1], step_ptr[t]):
            kind = int(ev_kind[k])
            s0, s1, s2, s3 = (int(x) for x in ev_sites[k])
            if kind == 2:
                if cz_touch == 1:
                    contrib = (sgn_lo <= s0 <= sgn_hi) or (sgn_lo <= s1 <= sgn_hi)
                else:
                    contrib = (sgn_lo <= s0 <= sgn_hi) and (sgn_lo <= s1 <= sgn_hi)
                if contrib:
                    sgn ^= bits[:, s0, :] & bits[:, s1, :]
            else:
                _apply_gate_planes(bits, kind, s0, s1, s2, s3, int(ev_outcome[k]))

            if track == 1:
                sup = [s for s in (s0, s1, s2, s3) if s >= 0]
                xany = np.bitwise_or.reduce(xlab[sup], axis=0)
                yany = np.bitwise_or.reduce(ylab[sup], axis=0)
                met |= xany & yany & ~met
                keep = met
                for s in sup:
                    h = bits[0, s, :] ^ bits[1, s, :]
                    xlab[s] = (xlab[s] & keep) | (h & xany & ~keep)
                    ylab[s] = (ylab[s] & keep) | (h & yany & ~keep)
        if ri < n_rec and rec_steps[ri] == t:
            _record(ri)
            ri += 1


def field_pairs(bits, ev_kind, ev_sites, ev_outcome, step_ptr, rec_steps,
                lane_mask, want_xt, out_count, out_xt):
    L = bits.shape[1]
    W = bits.shape[2]
    t_max = len(step_ptr) - 1
    n_rec = len(rec_steps)
    ri = 0

    def _record(i):
        h = bits[0] ^ bits[1]
        out_count[i] = _popcount(h & lane_mask[None, :])
        if want_xt == 1:
            planes = (h & lane_mask[None, :]).view(np.uint8)
            occ = np.unpackbits(planes, axis=1, bitorder="little").astype(bool)  # (L, W*64)
            any_occ = occ.any(axis=0)
            top = L - 1 - np.argmax(occ[::-1, :], axis=0)
            out_xt[i] = np.where(any_occ, top, -1)

    if n_rec > 0 and rec_steps[0] == 0:
        _record(0)
        ri = 1

    for t in range(1, t_max + 1):
        for k in range(step_ptr[t - 1], step_ptr[t]):
            kind = int(ev_kind[k])
            if kind == 2:
                continue
            s0, s1, s2, s3 = (int(x) for x in ev_sites[k])
            _apply_gate_planes(bits, kind, s0, s1, s2, s3, int(ev_outcome[k]))
        if ri < n_rec and rec_steps[ri] == t:
            _record(ri)
            ri += 1


def correlation_strings(init_bits, seed, slot_kind, slot_sites, slot_gating,
                        slot_draw_ofs, draws_per_step, p_u, p, t_max,
                        rec_steps, x_sites, origin, out_prod, out_z, out_z0):
    M = init_bits.shape[0]
    n_rec = len(rec_steps)
    b = init_bits  # (M, L) uint8, consumed
    seeds = np.empty(M, dtype=np.uint64)
    for m in range(M):
        seeds[m] = _rng.derive(int(seed), m)
    z0 = b[:, origin].copy()
    out_z0[0] += int(z0.sum())
    ri = 0

    def _record(i):
        cols = b[:, x_sites]
        out_prod[i] += (cols ^ z0[:, None]).sum(axis=0, dtype=np.int64)
        out_z[i] += cols.sum(axis=0, dtype=np.int64)

    if n_rec > 0 and rec_steps[0] == 0:
        _record(0)
        ri = 1

    def _uniforms(counter):
        # wraparound is the point; silence the scalar-overflow warning
        with np.errstate(over="ignore"):
            z = seeds + (np.uint64(counter) + _U1) * np.uint64(_rng.GOLDEN)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
            z = z ^ (z >> np.uint64(31))
        return (z >> np.uint64(11)) * 2.0**-53

    S = len(slot_kind)
    for t in range(1, t_max + 1):
        base = (t - 1) * draws_per_step
        for sl in range(S):
            g = int(slot_gating[sl])
            kind = int(slot_kind[sl])
            s0, s1, s2, s3 = (int(x) for x in slot_sites[sl])
            ctr = base + int(slot_draw_ofs[sl])
            if g == GATE_PU:
                fire = (_uniforms(ctr) < p_u).astype(np.uint8)
                out1 = None
            elif g == GATE_MEAS:
                fire = (_uniforms(ctr) < p).astype(np.uint8)
                out1 = (_uniforms(ctr + 1) < 0.5).astype(np.uint8)
            else:
                fire = np.ones(M, dtype=np.uint8)
                out1 = None
            if kind == 0:
                d = (b[:, s0] ^ b[:, s2]) & b[:, s1] & fire
                b[:, s0] ^= d
                b[:, s2] ^= d
            elif kind == 1:
                d = (b[:, s0] ^ b[:, s1]) & fire
                b[:, s0] ^= d
                b[:, s1] ^= d
            elif kind == 3:
                cond = ((1 - b[:, s0]) | b[:, s3]) & fire
                d = (b[:, s1] ^ b[:, s2]) & cond
                b[:, s1] ^= d
                b[:, s2] ^= d
            elif kind == 4:
                anti = (b[:, s0] ^ b[:, s1]) & fire
                # outcome 1 forces (0,1); outcome 2 forces (1,0)
                b[:, s0] = np.where(anti == 1, 1 - out1, b[:, s0]).astype(np.uint8)
                b[:, s1] = np.where(anti == 1, out1, b[:, s1]).astype(np.uint8)
        if ri < n_rec and rec_steps[ri] == t:
            _record(ri)
            ri += 1
