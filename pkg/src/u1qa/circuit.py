"""Static layer layouts for the three circuit models and sampled realizations.

A model's time step is a fixed sequence of sublayers (slot tables).  Sampling
a realization decides which stochastic slots fire and which measurement
outcomes occur; the result is a flat, immutable event list shared by every
trajectory evolved under it.

Randomness discipline: every stochastic slot owns fixed counters of the
realization stream (gated gates one, measurements two: fire then outcome),
consumed whether or not the slot fires.  The counter map is therefore static,
which keeps realizations bit-identical across sampling orders and backends.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from .lattice import Partition

KIND_FREDKIN = 0
KIND_SWAP = 1
KIND_CZ = 2
KIND_CSWAP4 = 3
KIND_MEASURE = 4

KIND_NAMES = {
    KIND_FREDKIN: "fredkin",
    KIND_SWAP: "swap",
    KIND_CZ: "cz",
    KIND_CSWAP4: "cswap4",
    KIND_MEASURE: "measure",
}
KIND_IDS = {v: k for k, v in KIND_NAMES.items()}
SUPPORT_SIZE = {KIND_FREDKIN: 3, KIND_SWAP: 2, KIND_CZ: 2, KIND_CSWAP4: 4, KIND_MEASURE: 2}

GATE_PU = 0      # fires with probability p_u (one draw)
GATE_ALWAYS = 1  # fires unconditionally (no draw)
GATE_MEAS = 2    # fires with probability p, fair-coin outcome (two draws)

MODELS = ("fredkin_swap", "swap_only", "cswap4")


@dataclass(frozen=True)
class ModelSpec:
    """Circuit family, lattice partition, and gate/measurement rates."""

    model: str
    part: Partition
    p_u: float
    p: float
    cz_rate: float = 1.0
    measure_per: str = "layer"  # "layer": measurements after every unitary layer;
                                # "step": one measurement layer per time step

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        L = self.part.L
        if self.model == "fredkin_swap" and L % 6 != 0:
            raise ValueError(f"fredkin_swap requires L % 6 == 0, got L={L}")
        if self.model == "cswap4" and L % 4 != 0:
            raise ValueError(f"cswap4 requires L % 4 == 0, got L={L}")
        if self.model == "swap_only" and L % 2 != 0:
            raise ValueError(f"swap_only requires even L, got L={L}")
        for name in ("p_u", "p", "cz_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.measure_per not in ("layer", "step"):
            raise ValueError(f"measure_per must be 'layer' or 'step', got {self.measure_per!r}")

    @property
    def beyond_paper(self) -> bool:
        """True for parameter combinations outside the studied regimes."""
        return self.model == "swap_only" and self.p > 0


@dataclass(frozen=True)
class GateEvent:
    """One fired event: a gate or measurement on an ordered site tuple (0-based)."""

    kind: str
    support: tuple[int, ...]
    outcome: int | None = None

    def __post_init__(self):
        if self.kind not in KIND_IDS:
            raise ValueError(f"unknown event kind {self.kind!r}")
        if len(self.support) != SUPPORT_SIZE[KIND_IDS[self.kind]]:
            raise ValueError(f"{self.kind} wants {SUPPORT_SIZE[KIND_IDS[self.kind]]} sites")
        if (self.kind == "measure") != (self.outcome in (1, 2)):
            raise ValueError("outcome is required exactly for measurements")


def _slot_row(sites_1based: list[int], L: int, boundary: str) -> tuple[int, ...] | None:
    """Map a 1-based site list to 0-based, wrapping or dropping at the edge."""
    wrapped = any(s > L for s in sites_1based)
    if wrapped and boundary == "open":
        return None
    return tuple((s - 1) % L for s in sites_1based)


@dataclass(frozen=True)
class LayerPlan:
    """Flattened static slot tables for one time step of a model."""

    spec: ModelSpec
    slot_kind: np.ndarray      # int8 (S,)
    slot_sites: np.ndarray     # int64 (S, 4), -1 padded
    slot_gating: np.ndarray    # int8 (S,)
    slot_layer: np.ndarray     # int16 (S,) unitary-layer index within the step
    slot_draw_ofs: np.ndarray  # int64 (S,) first stream counter used by the slot
    draws_per_step: int
    n_layers: int
    sublayer_bounds: tuple[tuple[int, int], ...] = field(default=())  # slot ranges


def build_layer_plan(spec: ModelSpec) -> LayerPlan:
    """Construct the static per-step slot tables for a model."""
    L = spec.part.L
    bc = spec.part.boundary
    cz_gating = GATE_ALWAYS if spec.cz_rate >= 1.0 else GATE_PU

    def pair_row(offset: int) -> list[tuple[int, ...]]:
        # offset 0: sites {2j-1, 2j}; offset 1: sites {2j, 2j+1}
        rows = []
        for j in range(1, L // 2 + 1):
            r = _slot_row([2 * j - 1 + offset, 2 * j + offset], L, bc)
            if r is not None:
                rows.append(r)
        return rows

    sub: list[tuple[int, list[tuple[int, ...]], int, int]] = []  # kind, rows, gating, layer

    def add_measure_layer(layer: int) -> None:
        sub.append((KIND_MEASURE, pair_row(0), GATE_MEAS, layer))
        sub.append((KIND_MEASURE, pair_row(1), GATE_MEAS, layer))

    if spec.model == "fredkin_swap":
        for layer in range(3):
            fred = []
            for j in range(1, L // 3 + 1):
                base = 3 * j - 2 + layer
                r = _slot_row([base, base + 1, base + 2], L, bc)
                if r is not None:
                    fred.append(r)
            pair_ofs = layer % 2
            sub.append((KIND_FREDKIN, fred, GATE_PU, layer))
            sub.append((KIND_SWAP, pair_row(pair_ofs), GATE_PU, layer))
            sub.append((KIND_CZ, pair_row(pair_ofs), cz_gating, layer))
            if spec.measure_per == "layer" or layer == 2:
                add_measure_layer(layer)
    elif spec.model == "swap_only":
        for layer in range(2):
            sub.append((KIND_SWAP, pair_row(layer), GATE_PU, layer))
            sub.append((KIND_CZ, pair_row(layer), cz_gating, layer))
            if spec.p > 0 and (spec.measure_per == "layer" or layer == 1):
                add_measure_layer(layer)
    else:  # cswap4
        for layer in range(4):
            csw = []
            for j in range(1, L // 4 + 1):
                base = 4 * j - 3 + layer
                r = _slot_row([base, base + 1, base + 2, base + 3], L, bc)
                if r is not None:
                    csw.append(r)
            sub.append((KIND_CSWAP4, csw, GATE_PU, layer))
            sub.append((KIND_CZ, pair_row(layer % 2), cz_gating, layer))
            if spec.measure_per == "layer" or layer == 3:
                add_measure_layer(layer)

    kinds, sites, gatings, layers = [], [], [], []
    bounds = []
    for kind, rows, gating, layer in sub:
        start = len(kinds)
        for r in rows:
            kinds.append(kind)
            sites.append(list(r) + [-1] * (4 - len(r)))
            gatings.append(gating)
            layers.append(layer)
        bounds.append((start, len(kinds)))

    slot_gating = np.array(gatings, dtype=np.int8)
    draw_ofs = np.zeros(len(kinds), dtype=np.int64)
    c = 0
    for i, g in enumerate(slot_gating):
        draw_ofs[i] = c
        if g == GATE_PU:
            c += 1
        elif g == GATE_MEAS:
            c += 2

    n_layers = {"fredkin_swap": 3, "swap_only": 2, "cswap4": 4}[spec.model]
    return LayerPlan(
        spec=spec,
        slot_kind=np.array(kinds, dtype=np.int8),
        slot_sites=np.array(sites, dtype=np.int64).reshape(len(kinds), 4),
        slot_gating=slot_gating,
        slot_layer=np.array(layers, dtype=np.int16),
        slot_draw_ofs=draw_ofs,
        draws_per_step=c,
        n_layers=n_layers,
        sublayer_bounds=tuple(bounds),
    )


@dataclass(frozen=True)
class Realization:
    """One sampled circuit instance: the fired events of t_max time steps."""

    spec: ModelSpec
    t_max: int
    seed: int
    ev_kind: np.ndarray     # int8 (K,)
    ev_sites: np.ndarray    # int64 (K, 4), -1 padded
    ev_outcome: np.ndarray  # int8 (K,) 0 for gates, 1/2 for measurements
    ev_step: np.ndarray     # int32 (K,) 1-based time step
    ev_layer: np.ndarray    # int16 (K,)
    step_ptr: np.ndarray    # int64 (t_max + 1,) event ranges per step

    @property
    def n_events(self) -> int:
        return len(self.ev_kind)

    def events_of_step(self, t: int) -> list[GateEvent]:
        """Fired events of time step t (1-based), in application order."""
        lo, hi = self.step_ptr[t - 1], self.step_ptr[t]
        out = []
        for k in range(lo, hi):
            width = SUPPORT_SIZE[int(self.ev_kind[k])]
            out.append(
                GateEvent(
                    kind=KIND_NAMES[int(self.ev_kind[k])],
                    support=tuple(int(s) for s in self.ev_sites[k, :width]),
                    outcome=int(self.ev_outcome[k]) if self.ev_kind[k] == KIND_MEASURE else None,
                )
            )
        return out

    def iter_steps(self):
        for t in range(1, self.t_max + 1):
            yield t, self.events_of_step(t)

    def to_text(self) -> str:
        """Compact textual event list: 'step layer kind sites outcome' lines.

        Sites are 1-based in this format.  Deterministic and replayable via
        realization_from_text.
        """
        lines = [f"# u1qa realization v1 model={self.spec.model} L={self.spec.part.L} "
                 f"t_max={self.t_max} seed={self.seed}"]
        for k in range(self.n_events):
            width = SUPPORT_SIZE[int(self.ev_kind[k])]
            sites = ",".join(str(int(s) + 1) for s in self.ev_sites[k, :width])
            out = int(self.ev_outcome[k])
            lines.append(
                f"{int(self.ev_step[k])} {int(self.ev_layer[k])} "
                f"{KIND_NAMES[int(self.ev_kind[k])]} {sites} {out}"
            )
        return "\n".join(lines) + "\n"


def realization_from_text(text: str, spec: ModelSpec) -> Realization:
    """Rebuild a Realization from its textual form (for replay)."""
    header = None
    kinds, sites, outs, steps, layers = [], [], [], [], []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            header = line
            continue
        step_s, layer_s, kind_s, sites_s, out_s = line.split()
        kinds.append(KIND_IDS[kind_s])
        row = [int(x) - 1 for x in sites_s.split(",")]
        sites.append(row + [-1] * (4 - len(row)))
        outs.append(int(out_s))
        steps.append(int(step_s))
        layers.append(int(layer_s))
    if header is None:
        raise ValueError("missing realization header line")
    t_max = int(header.split("t_max=")[1].split()[0])
    seed = int(header.split("seed=")[1].split()[0])
    ev_step = np.array(steps, dtype=np.int32)
    step_ptr = np.zeros(t_max + 1, dtype=np.int64)
    np.add.at(step_ptr, ev_step, 1)
    step_ptr = np.cumsum(step_ptr)
    return Realization(
        spec=spec,
        t_max=t_max,
        seed=seed,
        ev_kind=np.array(kinds, dtype=np.int8),
        ev_sites=np.array(sites, dtype=np.int64).reshape(len(kinds), 4),
        ev_outcome=np.array(outs, dtype=np.int8),
        ev_step=ev_step,
        ev_layer=np.array(layers, dtype=np.int16),
        step_ptr=step_ptr,
    )


def sample_realization(spec: ModelSpec, t_max: int, seed: int) -> Realization:
    """Sample which slots fire (and measurement outcomes) for t_max steps."""
    if t_max < 0:
        raise ValueError("t_max must be >= 0")
    plan = build_layer_plan(spec)
    S = len(plan.slot_kind)
    dps = plan.draws_per_step

    if t_max == 0 or S == 0:
        fire = np.zeros((t_max, S), dtype=bool)
        outcome = np.zeros((t_max, S), dtype=np.int8)
    else:
        counters = (
            np.arange(t_max, dtype=np.uint64)[:, None] * np.uint64(dps)
            + plan.slot_draw_ofs.astype(np.uint64)[None, :]
        )
        u_fire = _rng.draw_uniform_array(seed, counters)
        fire = np.zeros((t_max, S), dtype=bool)
        outcome = np.zeros((t_max, S), dtype=np.int8)
        pu_slots = plan.slot_gating == GATE_PU
        fire[:, pu_slots] = u_fire[:, pu_slots] < _gate_rate(spec, plan)[None, pu_slots]
        fire[:, plan.slot_gating == GATE_ALWAYS] = True
        meas = plan.slot_gating == GATE_MEAS
        fire[:, meas] = u_fire[:, meas] < spec.p
        u_out = _rng.draw_uniform_array(seed, counters[:, meas] + np.uint64(1))
        outcome[:, meas] = np.where(u_out < 0.5, 1, 2).astype(np.int8)
        outcome[~fire] = 0

    idx = np.nonzero(fire)
    t_fired, s_fired = idx
    ev_kind = plan.slot_kind[s_fired]
    ev_sites = plan.slot_sites[s_fired]
    ev_outcome = outcome[t_fired, s_fired]
    ev_step = (t_fired + 1).astype(np.int32)
    ev_layer = plan.slot_layer[s_fired]
    step_ptr = np.zeros(t_max + 1, dtype=np.int64)
    np.add.at(step_ptr, ev_step, 1)
    step_ptr = np.cumsum(step_ptr)
    return Realization(
        spec=spec, t_max=t_max, seed=seed,
        ev_kind=ev_kind.astype(np.int8), ev_sites=ev_sites.astype(np.int64),
        ev_outcome=ev_outcome.astype(np.int8), ev_step=ev_step,
        ev_layer=ev_layer.astype(np.int16), step_ptr=step_ptr,
    )


def _gate_rate(spec: ModelSpec, plan: LayerPlan) -> np.ndarray:
    """Per-slot firing probability for PU-gated slots (CZ may be down-rated)."""
    rate = np.full(len(plan.slot_kind), spec.p_u)
    rate[plan.slot_kind == KIND_CZ] = spec.cz_rate
    return rate


def reversed_realization(real: Realization) -> Realization:
    """The same events in reversed order, re-bucketed into steps 1..t_max.

    Reversed event k' = K-1-k lands in step t_max+1 - step(k).
    """
    order = np.arange(real.n_events - 1, -1, -1)
    ev_step = (real.t_max + 1 - real.ev_step[order]).astype(np.int32)
    step_ptr = np.zeros(real.t_max + 1, dtype=np.int64)
    np.add.at(step_ptr, ev_step, 1)
    step_ptr = np.cumsum(step_ptr)
    return Realization(
        spec=real.spec, t_max=real.t_max, seed=real.seed,
        ev_kind=real.ev_kind[order].copy(), ev_sites=real.ev_sites[order].copy(),
        ev_outcome=real.ev_outcome[order].copy(), ev_step=ev_step,
        ev_layer=real.ev_layer[order].copy(), step_ptr=step_ptr,
    )
