"""Reference dynamics: sign-tracked strings, the two-species field, meetings.

This module is the readable single-string/single-pair semantics.  Production
runs go through the word-parallel kernels, which are tested against these
functions event for event.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .circuit import (
    GateEvent,
    KIND_CSWAP4,
    KIND_CZ,
    KIND_FREDKIN,
    KIND_IDS,
    KIND_MEASURE,
    KIND_SWAP,
)
from .lattice import Partition

LABEL_NONE = 0
LABEL_X = 1
LABEL_Y = 2


def event_bits(kind: int, s0: int, s1: int, s2: int, s3: int, outcome: int,
               bits: np.ndarray) -> int:
    """Apply one event to a bit array in place; return 1 if the sign flips.

    Kept free of numpy idioms so the kernels can jit-compile it unchanged.
    """
    if kind == KIND_FREDKIN:
        if bits[s1] == 1:
            t = bits[s0]
            bits[s0] = bits[s2]
            bits[s2] = t
        return 0
    if kind == KIND_SWAP:
        t = bits[s0]
        bits[s0] = bits[s1]
        bits[s1] = t
        return 0
    if kind == KIND_CZ:
        if bits[s0] == 1 and bits[s1] == 1:
            return 1
        return 0
    if kind == KIND_CSWAP4:
        if bits[s0] == 0 or bits[s3] == 1:
            t = bits[s1]
            bits[s1] = bits[s2]
            bits[s2] = t
        return 0
    # measurement: anti-parallel support is forced to (0,1) or (1,0)
    if bits[s0] != bits[s1]:
        if outcome == 1:
            bits[s0] = 0
            bits[s1] = 1
        else:
            bits[s0] = 1
            bits[s1] = 0
    return 0


@dataclass
class EvolvingString:
    """A bit string with its accumulated phase sign (+1 or -1)."""

    bits: np.ndarray
    sign: int = 1

    def copy(self) -> "EvolvingString":
        return EvolvingString(self.bits.copy(), self.sign)


def apply_event(ev: GateEvent, s: EvolvingString) -> EvolvingString:
    """Pure single-event application; returns a new EvolvingString."""
    out = s.copy()
    sup = list(ev.support) + [-1] * (4 - len(ev.support))
    flip = event_bits(KIND_IDS[ev.kind], sup[0], sup[1], sup[2], sup[3],
                      ev.outcome or 0, out.bits)
    if flip:
        out.sign = -out.sign
    return out


def particle_field(n1: np.ndarray, n2: np.ndarray) -> np.ndarray:
    """Site-wise difference |n1 - n2| of two bit strings (XOR)."""
    n1 = np.asarray(n1)
    n2 = np.asarray(n2)
    if n1.shape != n2.shape:
        raise ValueError("particle_field requires equal-length strings")
    return np.bitwise_xor(n1, n2)


@dataclass
class PairTrajectory:
    """The four sign-tracked strings of one purity sample plus species state."""

    s1: EvolvingString
    s2: EvolvingString
    s1p: EvolvingString
    s2p: EvolvingString
    labels: np.ndarray  # int8 per site: 0 none, 1 X, 2 Y
    met: bool = False
    met_time: int | None = None
    step: int = 0
    part: Partition | None = field(default=None, repr=False)

    def strings(self) -> tuple[EvolvingString, ...]:
        return (self.s1, self.s2, self.s1p, self.s2p)


def init_pair_trajectory(n1: np.ndarray, n2: np.ndarray, part: Partition) -> PairTrajectory:
    """Build the SWAP_A quadruple and the initial X/Y species labels."""
    from .lattice import swap_a

    n1 = np.asarray(n1, dtype=np.uint8)
    n2 = np.asarray(n2, dtype=np.uint8)
    n1p, n2p = swap_a(n1, n2, part.L_A)
    h = particle_field(n1, n2)
    labels = np.zeros(part.L, dtype=np.int8)
    labels[: part.L_A][h[: part.L_A] == 1] = LABEL_X
    labels[part.L_A:][h[part.L_A:] == 1] = LABEL_Y
    return PairTrajectory(
        s1=EvolvingString(n1.copy()),
        s2=EvolvingString(n2.copy()),
        s1p=EvolvingString(n1p.copy()),
        s2p=EvolvingString(n2p.copy()),
        labels=labels,
        part=part,
    )


def step_pair(sublayer: list[GateEvent], pt: PairTrajectory) -> PairTrajectory:
    """Apply fired events to all four strings, updating labels and meetings.

    Labels are recomputed per event support: fresh particles inherit the
    species present on the support beforehand; a support holding both species
    marks the pair as met and freezes the labels from then on.
    """
    for ev in sublayer:
        sup = list(ev.support)
        kind = KIND_IDS[ev.kind]
        pre = pt.labels[sup]
        has_x = bool(np.any(pre == LABEL_X))
        has_y = bool(np.any(pre == LABEL_Y))

        for s in pt.strings():
            padded = sup + [-1] * (4 - len(sup))
            flip = event_bits(kind, padded[0], padded[1], padded[2], padded[3],
                              ev.outcome or 0, s.bits)
            if flip:
                s.sign = -s.sign

        if pt.met:
            continue
        if has_x and has_y:
            pt.met = True
            pt.met_time = pt.step
            continue
        if has_x or has_y:
            h = np.bitwise_xor(pt.s1.bits[sup], pt.s2.bits[sup])
            species = LABEL_X if has_x else LABEL_Y
            pt.labels[sup] = np.where(h == 1, species, LABEL_NONE).astype(np.int8)
        else:
            h = np.bitwise_xor(pt.s1.bits[sup], pt.s2.bits[sup])
            if np.any(h):
                raise AssertionError(
                    "particles created on a particle-free support; "
                    "pair state is inconsistent"
                )
    return pt


def relative_phase(pt: PairTrajectory) -> int:
    """Sign of the four-string phase product (each sign is its own inverse)."""
    return pt.s1.sign * pt.s2.sign * pt.s1p.sign * pt.s2p.sign


def endpoints(pt: PairTrajectory) -> tuple[int | None, int | None]:
    """Rightmost X-labeled and leftmost Y-labeled site (0-based), or None."""
    xs = np.nonzero(pt.labels == LABEL_X)[0]
    ys = np.nonzero(pt.labels == LABEL_Y)[0]
    x = int(xs[-1]) if len(xs) else None
    y = int(ys[0]) if len(ys) else None
    return x, y


def run_pair_reference(real, pt: PairTrajectory, t_stop: int | None = None) -> PairTrajectory:
    """Evolve a pair trajectory through a realization with the reference rules."""
    t_stop = real.t_max if t_stop is None else t_stop
    for t in range(1, t_stop + 1):
        pt.step = t
        step_pair(real.events_of_step(t), pt)
    return pt
