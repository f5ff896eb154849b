"""numba implementations of the word-parallel trajectory kernels.

Lanes are Monte Carlo samples packed 64 per uint64 word; a gate touches a
handful of site rows across all lanes at once.  Lanes are independent, so the
kernels sweep the event list once per cache-sized tile of words instead of
streaming the whole lane set through memory for every event.  Everything here
must stay bit-identical to the pure-numpy twin in _kernels_numpy.py.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from . import dynamics as _dyn
from .circuit import GATE_MEAS, GATE_PU

U64_1 = np.uint64(1)
U64_0 = np.uint64(0)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

_SUPPORT_SIZE = np.array([3, 2, 2, 4, 2], dtype=np.int64)

# words per tile; 512 keeps a 4-role L~600 working set inside the last-level
# cache while amortising the event-decode overhead
_TILE = 512

event_bits_scalar = njit(cache=True)(_dyn.event_bits)


@njit(cache=True, inline="always")
def _popcount64(x):
    x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
    x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
    x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return (x * np.uint64(0x0101010101010101)) >> np.uint64(56)


@njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def _derive1(seed, v):
    h = _mix64(seed)
    return _mix64(h + _GOLDEN + _mix64(v + _GOLDEN))


@njit(cache=True, inline="always")
def _draw_uniform(seed, counter):
    u = _mix64(seed + (counter + U64_1) * _GOLDEN)
    return (u >> np.uint64(11)) * 2.0**-53


@njit(cache=True)
def _phase_tile(bits, sgn, ev_kind, ev_sites, ev_outcome, step_ptr, rec_steps,
                sgn_lo, sgn_hi, cz_touch, track, xlab, ylab, met, lane_mask,
                w0, w1, out_neg, out_met, out_viol):
    R = bits.shape[0]
    t_max = step_ptr.shape[0] - 1
    n_rec = rec_steps.shape[0]
    ri = 0

    def _record(ri_):
        neg = 0
        metc = 0
        viol = 0
        for w in range(w0, w1):
            prod = U64_0
            for r in range(R):
                prod ^= sgn[r, w]
            m = lane_mask[w]
            neg += np.int64(_popcount64(prod & m))
            metc += np.int64(_popcount64(met[w] & m))
            viol += np.int64(_popcount64(prod & (~met[w]) & m))
        out_neg[ri_] += neg
        out_met[ri_] += metc
        out_viol[ri_] += viol

    if n_rec > 0 and rec_steps[0] == 0:
        _record(0)
        ri = 1

    for t in range(1, t_max + 1):
        for k in range(step_ptr[t - 1], step_ptr[t]):
            kind = ev_kind[k]
            s0 = ev_sites[k, 0]
            s1 = ev_sites[k, 1]
            s2 = ev_sites[k, 2]
            s3 = ev_sites[k, 3]
            if kind == 2:
                if cz_touch == 1:
                    contrib = (sgn_lo <= s0 <= sgn_hi) or (sgn_lo <= s1 <= sgn_hi)
                else:
                    contrib = (sgn_lo <= s0 <= sgn_hi) and (sgn_lo <= s1 <= sgn_hi)
                if contrib:
                    for r in range(R):
                        for w in range(w0, w1):
                            sgn[r, w] ^= bits[r, s0, w] & bits[r, s1, w]
            elif kind == 0:
                for r in range(R):
                    for w in range(w0, w1):
                        d = (bits[r, s0, w] ^ bits[r, s2, w]) & bits[r, s1, w]
                        bits[r, s0, w] ^= d
                        bits[r, s2, w] ^= d
            elif kind == 1:
                for r in range(R):
                    for w in range(w0, w1):
                        tmp = bits[r, s0, w]
                        bits[r, s0, w] = bits[r, s1, w]
                        bits[r, s1, w] = tmp
            elif kind == 3:
                for r in range(R):
                    for w in range(w0, w1):
                        cond = (~bits[r, s0, w]) | bits[r, s3, w]
                        d = (bits[r, s1, w] ^ bits[r, s2, w]) & cond
                        bits[r, s1, w] ^= d
                        bits[r, s2, w] ^= d
            else:
                if ev_outcome[k] == 1:
                    for r in range(R):
                        for w in range(w0, w1):
                            d = bits[r, s0, w] ^ bits[r, s1, w]
                            bits[r, s0, w] &= ~d
                            bits[r, s1, w] |= d
                else:
                    for r in range(R):
                        for w in range(w0, w1):
                            d = bits[r, s0, w] ^ bits[r, s1, w]
                            bits[r, s0, w] |= d
                            bits[r, s1, w] &= ~d

            if track == 1:
                nsup = _SUPPORT_SIZE[kind]
                for w in range(w0, w1):
                    xany = U64_0
                    yany = U64_0
                    for i in range(nsup):
                        s = ev_sites[k, i]
                        xany |= xlab[s, w]
                        yany |= ylab[s, w]
                    met[w] |= xany & yany & (~met[w])
                    keep = met[w]
                    for i in range(nsup):
                        s = ev_sites[k, i]
                        h = bits[0, s, w] ^ bits[1, s, w]
                        xlab[s, w] = (xlab[s, w] & keep) | (h & xany & (~keep))
                        ylab[s, w] = (ylab[s, w] & keep) | (h & yany & (~keep))
        if ri < n_rec and rec_steps[ri] == t:
            _record(ri)
            ri += 1


@njit(cache=True)
def phase_pairs(bits, sgn, ev_kind, ev_sites, ev_outcome, step_ptr, rec_steps,
                sgn_lo, sgn_hi, cz_touch, track, xlab, ylab, met, lane_mask,
                out_neg, out_met, out_viol):
    """Evolve R sign-tracked roles per lane; record sign/meeting statistics."""
    W = bits.shape[2]
    for w0 in range(0, W, _TILE):
        w1 = min(w0 + _TILE, W)
        _phase_tile(bits, sgn, ev_kind, ev_sites, ev_outcome, step_ptr,
                    rec_steps, sgn_lo, sgn_hi, cz_touch, track, xlab, ylab,
                    met, lane_mask, w0, w1, out_neg, out_met, out_viol)


@njit(cache=True)
def _field_tile(bits, ev_kind, ev_sites, ev_outcome, step_ptr, rec_steps,
                lane_mask, want_xt, w0, w1, out_count, out_xt):
    L = bits.shape[1]
    t_max = step_ptr.shape[0] - 1
    n_rec = rec_steps.shape[0]
    ri = 0

    def _record(ri_):
        total = 0
        for s in range(L):
            for w in range(w0, w1):
                total += np.int64(_popcount64((bits[0, s, w] ^ bits[1, s, w]) & lane_mask[w]))
        out_count[ri_] += total
        if want_xt == 1:
            for w in range(w0, w1):
                rem = lane_mask[w]
                s = L - 1
                while rem != U64_0 and s >= 0:
                    hit = (bits[0, s, w] ^ bits[1, s, w]) & rem
                    while hit != U64_0:
                        lsb = hit & (U64_0 - hit)
                        lane = np.int64(_popcount64(lsb - U64_1))
                        out_xt[ri_, w * 64 + lane] = s
                        hit ^= lsb
                        rem ^= lsb
                    s -= 1
                while rem != U64_0:
                    lsb = rem & (U64_0 - rem)
                    lane = np.int64(_popcount64(lsb - U64_1))
                    out_xt[ri_, w * 64 + lane] = -1
                    rem ^= lsb

    if n_rec > 0 and rec_steps[0] == 0:
        _record(0)
        ri = 1

    for t in range(1, t_max + 1):
        for k in range(step_ptr[t - 1], step_ptr[t]):
            kind = ev_kind[k]
            if kind == 2:
                continue
            s0 = ev_sites[k, 0]
            s1 = ev_sites[k, 1]
            s2 = ev_sites[k, 2]
            s3 = ev_sites[k, 3]
            if kind == 0:
                for w in range(w0, w1):
                    d = (bits[0, s0, w] ^ bits[0, s2, w]) & bits[0, s1, w]
                    bits[0, s0, w] ^= d
                    bits[0, s2, w] ^= d
                for w in range(w0, w1):
                    d = (bits[1, s0, w] ^ bits[1, s2, w]) & bits[1, s1, w]
                    bits[1, s0, w] ^= d
                    bits[1, s2, w] ^= d
            elif kind == 1:
                for r in range(2):
                    for w in range(w0, w1):
                        tmp = bits[r, s0, w]
                        bits[r, s0, w] = bits[r, s1, w]
                        bits[r, s1, w] = tmp
            elif kind == 3:
                for r in range(2):
                    for w in range(w0, w1):
                        cond = (~bits[r, s0, w]) | bits[r, s3, w]
                        d = (bits[r, s1, w] ^ bits[r, s2, w]) & cond
                        bits[r, s1, w] ^= d
                        bits[r, s2, w] ^= d
            else:
                if ev_outcome[k] == 1:
                    for r in range(2):
                        for w in range(w0, w1):
                            d = bits[r, s0, w] ^ bits[r, s1, w]
                            bits[r, s0, w] &= ~d
                            bits[r, s1, w] |= d
                else:
                    for r in range(2):
                        for w in range(w0, w1):
                            d = bits[r, s0, w] ^ bits[r, s1, w]
                            bits[r, s0, w] |= d
                            bits[r, s1, w] &= ~d
        if ri < n_rec and rec_steps[ri] == t:
            _record(ri)
            ri += 1


@njit(cache=True)
def field_pairs(bits, ev_kind, ev_sites, ev_outcome, step_ptr, rec_steps,
                lane_mask, want_xt, out_count, out_xt):
    """Evolve a two-role pair tracking only the difference field."""
    W = bits.shape[2]
    for w0 in range(0, W, _TILE):
        w1 = min(w0 + _TILE, W)
        _field_tile(bits, ev_kind, ev_sites, ev_outcome, step_ptr, rec_steps,
                    lane_mask, want_xt, w0, w1, out_count, out_xt)


@njit(cache=True)
def correlation_strings(init_bits, seed, slot_kind, slot_sites, slot_gating,
                        slot_draw_ofs, draws_per_step, p_u, p, t_max,
                        rec_steps, x_sites, origin, out_prod, out_z, out_z0):
    """Evolve one string per sample under a fresh realization per sample.

    Accumulates XOR counts for the on-site spin product and marginal so the
    caller can form the autocorrelation estimator.  CZ slots must already be
    stripped (they never move bits, and consume no draws).
    """
    M = init_bits.shape[0]
    S = slot_kind.shape[0]
    n_rec = rec_steps.shape[0]
    nx = x_sites.shape[0]
    dps = np.uint64(draws_per_step)

    for m in range(M):
        b = init_bits[m]
        sm = _derive1(seed, np.uint64(m))
        z0 = b[origin]
        out_z0[0] += z0
        ri = 0
        if n_rec > 0 and rec_steps[0] == 0:
            for xi in range(nx):
                out_prod[0, xi] += b[x_sites[xi]] ^ z0
                out_z[0, xi] += b[x_sites[xi]]
            ri = 1
        for t in range(1, t_max + 1):
            base = np.uint64(t - 1) * dps
            for sl in range(S):
                g = slot_gating[sl]
                ctr = base + np.uint64(slot_draw_ofs[sl])
                fire = True
                outcome = 0
                if g == GATE_PU:
                    fire = _draw_uniform(sm, ctr) < p_u
                elif g == GATE_MEAS:
                    fire = _draw_uniform(sm, ctr) < p
                    if fire:
                        outcome = 1 if _draw_uniform(sm, ctr + U64_1) < 0.5 else 2
                if fire:
                    event_bits_scalar(slot_kind[sl], slot_sites[sl, 0],
                                      slot_sites[sl, 1], slot_sites[sl, 2],
                                      slot_sites[sl, 3], outcome, b)
            if ri < n_rec and rec_steps[ri] == t:
                for xi in range(nx):
                    out_prod[ri, xi] += b[x_sites[xi]] ^ z0
                    out_z[ri, xi] += b[x_sites[xi]]
                ri += 1
