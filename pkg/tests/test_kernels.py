"""Cross-backend and kernel-vs-reference equivalence.

The numba and numpy kernel twins must produce identical outputs, and both
must reproduce the readable per-pair reference dynamics event for event.
"""

import numpy as np
import pytest

from u1qa import _kernels_numba, _kernels_numpy, kernels, rng
from u1qa.circuit import ModelSpec, build_layer_plan, sample_realization
from u1qa.dynamics import init_pair_trajectory, relative_phase, run_pair_reference
from u1qa.kernels import lane_mask, pack_lanes, unpack_lanes, words_for
from u1qa.lattice import Partition
from u1qa.observables import record_steps


def test_pack_unpack_roundtrip():
    g = rng.generator(0)
    for n, L in [(1, 5), (63, 7), (64, 3), (65, 9), (200, 24)]:
        rows = g.integers(0, 2, size=(n, L), dtype=np.uint8)
        planes = pack_lanes(rows)
        assert planes.shape == (L, words_for(n))
        assert np.array_equal(unpack_lanes(planes, n), rows)


def test_lane_mask():
    m = lane_mask(130)
    assert m.shape == (3,)
    assert m[0] == np.uint64(0xFFFFFFFFFFFFFFFF)
    assert m[2] == np.uint64(3)
    assert int(np.bitwise_count(m).sum()) == 130


def _phase_args(model="fredkin_swap", L=12, p=0.5, M=130, t_max=10, seed=3,
                track=True, window=None):
    part = Partition(L=L, L_A=L // 2, boundary="periodic")
    spec = ModelSpec(model, part, p_u=0.5, p=p)
    real = sample_realization(spec, t_max, seed=seed)
    g = rng.generator(seed + 1)
    n1 = g.integers(0, 2, size=(M, L), dtype=np.uint8)
    n2 = g.integers(0, 2, size=(M, L), dtype=np.uint8)
    la = part.L_A
    n1p = np.hstack([n2[:, :la], n1[:, la:]])
    n2p = np.hstack([n1[:, :la], n2[:, la:]])
    roles = np.stack([n1, n2, n1p, n2p])
    return part, real, roles


def _run_phase_with(impl, real, roles, rec, *, track, L_A, window=None, touch=False):
    R, M, L = roles.shape
    W = words_for(M)
    bits = np.empty((R, L, W), dtype=np.uint64)
    for r in range(R):
        bits[r] = pack_lanes(roles[r])
    sgn = np.zeros((R, W), dtype=np.uint64)
    h = bits[0] ^ bits[1]
    xlab = np.zeros((L, W), dtype=np.uint64)
    ylab = np.zeros((L, W), dtype=np.uint64)
    if track:
        xlab[:L_A] = h[:L_A]
        ylab[L_A:] = h[L_A:]
    met = np.zeros(W, dtype=np.uint64)
    lo, hi = window if window else (0, L - 1)
    out = [np.zeros(len(rec), dtype=np.int64) for _ in range(3)]
    impl.phase_pairs(bits, sgn, real.ev_kind, real.ev_sites, real.ev_outcome,
                     real.step_ptr, rec, lo, hi, 1 if touch else 0,
                     1 if track else 0, xlab, ylab, met, lane_mask(M),
                     out[0], out[1], out[2])
    return bits, sgn, met, xlab, ylab, out


def test_backend_equivalence_phase():
    part, real, roles = _phase_args(M=130)
    rec = np.arange(11)
    a = _run_phase_with(_kernels_numba, real, roles.copy(), rec, track=True, L_A=part.L_A)
    b = _run_phase_with(_kernels_numpy, real, roles.copy(), rec, track=True, L_A=part.L_A)
    for x, y in zip(a, b):
        if isinstance(x, list):
            for u, v in zip(x, y):
                assert np.array_equal(u, v)
        else:
            assert np.array_equal(x, y)


def test_backend_equivalence_phase_window():
    part, real, roles = _phase_args(model="cswap4", L=16, M=70)
    rec = np.arange(11)
    a = _run_phase_with(_kernels_numba, real, roles[:2].copy(), rec, track=False,
                        L_A=part.L_A, window=(part.L_A, part.L - 1))
    b = _run_phase_with(_kernels_numpy, real, roles[:2].copy(), rec, track=False,
                        L_A=part.L_A, window=(part.L_A, part.L - 1))
    for u, v in zip(a[5], b[5]):
        assert np.array_equal(u, v)


def test_kernel_matches_reference_pairs():
    part, real, roles = _phase_args(M=67, t_max=8, p=0.7)
    rec = np.arange(9)
    out = kernels.run_phase_pairs(real, roles.copy(), rec, track_meeting=True,
                                  L_A=part.L_A)
    # reference evolution, pair by pair
    ref_phase = np.empty((9, 67), dtype=np.int64)
    ref_met = np.empty((9, 67), dtype=bool)
    for m in range(67):
        pt = init_pair_trajectory(roles[0, m], roles[1, m], part)
        ref_phase[0, m] = relative_phase(pt)
        ref_met[0, m] = pt.met
        for t in range(1, 9):
            pt.step = t
            from u1qa.dynamics import step_pair
            step_pair(real.events_of_step(t), pt)
            ref_phase[t, m] = relative_phase(pt)
            ref_met[t, m] = pt.met
    assert np.array_equal(out.sign_sum, ref_phase.sum(axis=1))
    assert np.array_equal(out.met, ref_met.sum(axis=1))
    assert np.all(out.viol == 0)


def test_kernel_bits_match_reference():
    part, real, roles = _phase_args(model="swap_only", L=10, M=65, t_max=6, p=0.8)
    rec = np.array([6])
    R, M, L = roles.shape
    bits, sgn, met, xlab, ylab, out = _run_phase_with(
        _kernels_numba, real, roles.copy(), rec, track=True, L_A=part.L_A)
    for m in range(0, M, 7):
        pt = init_pair_trajectory(roles[0, m], roles[1, m], part)
        run_pair_reference(real, pt)
        got = unpack_lanes(bits[0], M)[m]
        assert np.array_equal(got, pt.s1.bits)
        got2 = unpack_lanes(bits[3], M)[m]
        assert np.array_equal(got2, pt.s2p.bits)
        sgn_bit = (int(sgn[0, m // 64]) >> (m % 64)) & 1
        assert (-1 if sgn_bit else 1) == pt.s1.sign
        met_bit = (int(met[m // 64]) >> (m % 64)) & 1
        assert bool(met_bit) == pt.met


def test_field_kernel_matches_reference():
    part = Partition(L=14, L_A=7, boundary="open")
    spec = ModelSpec("swap_only", part, p_u=0.5, p=0.6)
    real = sample_realization(spec, 10, seed=21)
    g = rng.generator(5)
    M = 66
    n1 = g.integers(0, 2, size=(M, 14), dtype=np.uint8)
    n2 = n1.copy()
    flip = g.integers(0, 2, size=(M, 7), dtype=np.uint8)
    n2[:, :7] ^= flip  # differences only in A
    roles = np.stack([n1, n2])
    rec = np.arange(11)
    out = kernels.run_field_pairs(real, roles.copy(), rec, want_rightmost=True)
    out_np = None
    # numpy twin
    W = words_for(M)
    bits = np.stack([pack_lanes(n1), pack_lanes(n2)])
    oc = np.zeros(11, dtype=np.int64)
    ox = np.full((11, W * 64), -2, dtype=np.int32)
    _kernels_numpy.field_pairs(bits, real.ev_kind, real.ev_sites, real.ev_outcome,
                               real.step_ptr, rec, lane_mask(M), 1, oc, ox)
    assert np.array_equal(out.count, oc)
    assert np.array_equal(out.rightmost, ox[:, :M])
    # reference check of the rightmost trace for a handful of lanes
    for m in range(0, M, 9):
        pt = init_pair_trajectory(n1[m], n2[m], part)
        for t in range(1, 11):
            pt.step = t
            from u1qa.dynamics import step_pair
            step_pair(real.events_of_step(t), pt)
        h = np.bitwise_xor(pt.s1.bits, pt.s2.bits)
        expect = int(np.nonzero(h)[0][-1]) if h.any() else -1
        assert out.rightmost[10, m] == expect


def test_correlation_backends_agree_and_match_reference():
    part = Partition(L=12, L_A=6, boundary="periodic")
    spec = ModelSpec("fredkin_swap", part, p_u=0.4, p=0.5)
    plan = build_layer_plan(spec)
    g = rng.generator(9)
    M = 40
    init = g.integers(0, 2, size=(M, 12), dtype=np.uint8)
    rec = record_steps(6, 1)
    xs = np.array([5, 7], dtype=np.int64)

    res_nb = kernels.run_correlation(plan, init, seed=55, t_max=6, rec_steps=rec,
                                     x_sites=xs, origin=5)
    import u1qa.kernels as K
    orig = K._impl
    try:
        K._impl = _kernels_numpy
        res_np = kernels.run_correlation(plan, init, seed=55, t_max=6, rec_steps=rec,
                                         x_sites=xs, origin=5)
    finally:
        K._impl = orig
    assert np.array_equal(res_nb.prod_xor, res_np.prod_xor)
    assert np.array_equal(res_nb.z_count, res_np.z_count)
    assert res_nb.z0_count == res_np.z0_count

    # scalar reference for one sample: regenerate events with the same stream
    from u1qa.dynamics import EvolvingString, apply_event
    from u1qa.circuit import GATE_MEAS, GATE_PU, GATE_ALWAYS, KIND_CZ, KIND_NAMES, SUPPORT_SIZE
    m = 17
    sm = rng.derive(55, m)
    b = init[m].copy()
    keep = plan.slot_kind != KIND_CZ
    for t in range(1, 7):
        base = (t - 1) * plan.draws_per_step
        for sl in np.nonzero(keep)[0]:
            gat = int(plan.slot_gating[sl])
            ctr = base + int(plan.slot_draw_ofs[sl])
            fire = True
            outcome = None
            if gat == GATE_PU:
                fire = rng.draw_uniform(sm, ctr) < spec.p_u
            elif gat == GATE_MEAS:
                fire = rng.draw_uniform(sm, ctr) < spec.p
                if fire:
                    outcome = 1 if rng.draw_uniform(sm, ctr + 1) < 0.5 else 2
            if fire:
                kind = int(plan.slot_kind[sl])
                width = SUPPORT_SIZE[kind]
                from u1qa.circuit import GateEvent
                e = GateEvent(KIND_NAMES[kind],
                              tuple(int(x) for x in plan.slot_sites[sl][:width]),
                              outcome)
                s = apply_event(e, EvolvingString(b))
                b = s.bits
    # the kernel's contribution of sample m at the final record step is the
    # total minus all other samples; instead rerun the kernel on one sample
    res_one = kernels.run_correlation(plan, init[m:m + 1].copy(), seed=55, t_max=6,
                                      rec_steps=rec, x_sites=xs, origin=5)
    # seed stream indexes samples from 0, so the single-sample run uses m=0;
    # emulate by deriving the same per-sample seed
    sm0 = rng.derive(55, 0)
    b0 = init[m].copy()
    for t in range(1, 7):
        base = (t - 1) * plan.draws_per_step
        for sl in np.nonzero(keep)[0]:
            gat = int(plan.slot_gating[sl])
            ctr = base + int(plan.slot_draw_ofs[sl])
            fire = True
            outcome = None
            if gat == GATE_PU:
                fire = rng.draw_uniform(sm0, ctr) < spec.p_u
            elif gat == GATE_MEAS:
                fire = rng.draw_uniform(sm0, ctr) < spec.p
                if fire:
                    outcome = 1 if rng.draw_uniform(sm0, ctr + 1) < 0.5 else 2
            if fire:
                kind = int(plan.slot_kind[sl])
                width = SUPPORT_SIZE[kind]
                from u1qa.circuit import GateEvent
                e = GateEvent(KIND_NAMES[kind],
                              tuple(int(x) for x in plan.slot_sites[sl][:width]),
                              outcome)
                s = apply_event(e, EvolvingString(b0))
                b0 = s.bits
    z0 = init[m, 5]
    assert res_one.prod_xor[-1].tolist() == [int(b0[5] ^ z0), int(b0[7] ^ z0)]
    assert res_one.z_count[-1].tolist() == [int(b0[5]), int(b0[7])]


def test_phase_kernel_rejects_bad_rec():
    part, real, roles = _phase_args(M=5, t_max=3)
    with pytest.raises(ValueError):
        kernels.run_phase_pairs(real, roles, np.array([0, 0, 1]),
                                track_meeting=False)
    with pytest.raises(ValueError):
        kernels.run_phase_pairs(real, roles, np.array([0, 5]),
                                track_meeting=False)
