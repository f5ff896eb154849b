"""Monte Carlo estimators for entropies, meeting fractions, transport, and decay.

Every estimator shares the same two-level averaging: samples are reduced
within each circuit realization first, the per-realization values are
transformed (e.g. -ln), and the mean and standard error are taken across
realizations.  Per-realization curves are kept on the TimeSeries for
bootstrap fits.
"""

from __future__ import annotations

import dataclasses
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import __version__, kernels
from . import rng as _rng
from .circuit import ModelSpec, Realization, build_layer_plan, sample_realization
from .lattice import (
    SectorSpec,
    constrained_set_size,
    make_dead_region_batch,
    sample_pair_constrained_batch,
    sector_size,
)

INITIAL_KINDS = ("standard_pair", "dead_region", "single_string")


@dataclass(frozen=True)
class InitialSpec:
    """Initial ensemble shape for a run (see each estimator for its meaning)."""

    kind: str = "standard_pair"
    nu_a: Fraction | None = None

    def __post_init__(self):
        if self.kind not in INITIAL_KINDS:
            raise ValueError(f"unknown initial kind {self.kind!r}")
        if self.kind == "dead_region" and self.nu_a is None:
            raise ValueError("dead_region initial requires nu_A")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one run."""

    model: ModelSpec
    sector: SectorSpec
    initial: InitialSpec
    t_max: int
    realizations: int
    pairs: int
    seed: int
    record_stride: int = 1
    workers: int = 1
    q_phase_touch: bool = False  # count boundary-straddling CZs into the B phase

    def __post_init__(self):
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if self.realizations < 1 or self.pairs < 1:
            raise ValueError("realizations and pairs must be >= 1")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.sector.kind == "fixed":
            self.sector.charge(self.model.part.L)  # validates nu*L integral


def config_dict(cfg: ExperimentConfig) -> dict:
    """JSON-ready echo of a config (Fractions become strings)."""
    def conv(x):
        if isinstance(x, Fraction):
            return str(x)
        if isinstance(x, dict):
            return {k: conv(v) for k, v in x.items()}
        return x

    d = dataclasses.asdict(cfg)
    d = {k: conv(v) for k, v in d.items()}
    d["version"] = __version__
    d["backend"] = kernels.get_backend()
    if cfg.model.beyond_paper:
        d["beyond_reference_regime"] = True
    return d


@dataclass
class TimeSeries:
    """Per-time estimates with realization-level errors and a config echo."""

    times: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_valid: np.ndarray
    meta: dict
    per_real: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        n = len(self.times)
        if not (len(self.mean) == len(self.stderr) == len(self.n_valid) == n):
            raise ValueError("TimeSeries columns must have equal length")
        if np.any(self.stderr[~np.isnan(self.stderr)] < 0):
            raise ValueError("stderr must be nonnegative")

    @property
    def valid(self) -> np.ndarray:
        return self.n_valid > 0


def record_steps(t_max: int, stride: int) -> np.ndarray:
    """Record grid 0, stride, 2*stride, ..., always including t_max."""
    steps = np.arange(0, t_max + 1, stride, dtype=np.int64)
    if steps[-1] != t_max:
        steps = np.append(steps, t_max)
    return steps


def write_timeseries_csv(ts: TimeSeries, path) -> None:
    """CSV with a JSON config header: rows are t,mean,stderr,n_valid."""
    with open(path, "w") as f:
        f.write("# u1qa timeseries v1\n")
        f.write(f"# config: {json.dumps(ts.meta, sort_keys=True)}\n")
        f.write("t,mean,stderr,n_valid\n")
        for t, m, s, n in zip(ts.times, ts.mean, ts.stderr, ts.n_valid):
            ms = "nan" if np.isnan(m) else repr(float(m))
            ss = "nan" if np.isnan(s) else repr(float(s))
            f.write(f"{int(t)},{ms},{ss},{int(n)}\n")


def read_timeseries_csv(path) -> TimeSeries:
    meta = {}
    rows = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            if line.startswith("# config:"):
                meta = json.loads(line.split(":", 1)[1])
                continue
            if line.startswith("#") or line.startswith("t,"):
                continue
            t, m, s, n = line.split(",")
            rows.append((int(t), float(m), float(s), int(n)))
    if not rows:
        raise ValueError(f"no data rows in {path}")
    arr = np.array(rows, dtype=np.float64)
    return TimeSeries(times=arr[:, 0].astype(np.int64), mean=arr[:, 1],
                      stderr=arr[:, 2], n_valid=arr[:, 3].astype(np.int64),
                      meta=meta)


# ---------------------------------------------------------------------------
# shared realization machinery


def _realization_for(cfg: ExperimentConfig, r: int) -> Realization:
    seed = _rng.derive(cfg.seed, _rng.STREAM_REALIZATION, r)
    return sample_realization(cfg.model, cfg.t_max, seed)


def _pair_rng(cfg: ExperimentConfig, r: int) -> np.random.Generator:
    return _rng.generator(_rng.derive(cfg.seed, _rng.STREAM_PAIRS, r))


def _log_prefactor(cfg: ExperimentConfig) -> float:
    """log of the pair-set weight: 1 for mixed, |constrained set| / N^2 fixed."""
    if cfg.sector.kind == "mixed":
        return 0.0
    part = cfg.model.part
    c = constrained_set_size(part, cfg.sector.nu)
    n = sector_size(part.L, cfg.sector.charge(part.L))
    return math.log(c) - 2.0 * math.log(n)


def _draw_phase_roles(cfg: ExperimentConfig, g: np.random.Generator) -> np.ndarray:
    """(4, M, L) initial strings n1, n2 and their subsystem-A swap."""
    part = cfg.model.part
    M = cfg.pairs
    if cfg.sector.kind == "mixed":
        n1 = g.integers(0, 2, size=(M, part.L), dtype=np.uint8)
        n2 = g.integers(0, 2, size=(M, part.L), dtype=np.uint8)
    else:
        n1, n2 = sample_pair_constrained_batch(part, cfg.sector.nu, M, g)
    la = part.L_A
    n1p = np.hstack([n2[:, :la], n1[:, la:]])
    n2p = np.hstack([n1[:, :la], n2[:, la:]])
    return np.stack([n1, n2, n1p, n2p])


def _draw_a_difference_pair(cfg: ExperimentConfig, g: np.random.Generator) -> np.ndarray:
    """(2, M, L) pair differing only in subsystem A (shared B half)."""
    part = cfg.model.part
    if cfg.initial.kind == "dead_region":
        n1, n2 = make_dead_region_batch(part, cfg.initial.nu_a, cfg.pairs, g)
        return np.stack([n1, n2])
    if cfg.sector.kind != "fixed":
        raise ValueError("A-difference pairs need a fixed sector or a dead region")
    n1, n2 = sample_pair_constrained_batch(part, cfg.sector.nu, cfg.pairs, g)
    la = part.L_A
    n1p = np.hstack([n2[:, :la], n1[:, la:]])
    return np.stack([n1, n1p])


def _map_realizations(fn, cfg: ExperimentConfig, payload=None):
    """Run fn(cfg, r, payload) for every realization, in index order."""
    args = [(cfg, r, payload) for r in range(cfg.realizations)]
    if cfg.workers == 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
        return list(ex.map(fn, *zip(*args)))


def _two_level(times, per_real_values, meta, min_valid_warn=True) -> TimeSeries:
    """Mean/stderr across realizations of possibly NaN per-realization values."""
    vals = np.asarray(per_real_values, dtype=np.float64)
    valid = ~np.isnan(vals)
    n_valid = valid.sum(axis=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = np.nanmean(vals, axis=0)
        sd = np.nanstd(vals, axis=0, ddof=1)
    stderr = np.where(n_valid > 1, sd / np.sqrt(np.maximum(n_valid, 1)), 0.0)
    mean = np.where(n_valid > 0, mean, np.nan)
    stderr = np.where(n_valid > 0, stderr, np.nan)
    if min_valid_warn and np.any(n_valid == 0):
        warnings.warn("some time points are invalid in every realization; "
                      "increase pairs per realization", stacklevel=3)
    meta = dict(meta)
    meta["masked_points"] = int(np.sum(n_valid == 0))
    meta["masked_fraction_realization_points"] = float(1.0 - valid.mean())
    return TimeSeries(times=times, mean=mean, stderr=stderr,
                      n_valid=n_valid.astype(np.int64), meta=meta, per_real=vals)


# ---------------------------------------------------------------------------
# phase-sum entropy and meeting fraction


def _phase_counts_one(cfg: ExperimentConfig, r: int, payload) -> tuple:
    real = _realization_for(cfg, r)
    roles = _draw_phase_roles(cfg, _pair_rng(cfg, r))
    rec = kernels.run_phase_pairs(
        real, roles, record_steps(cfg.t_max, cfg.record_stride),
        track_meeting=True, L_A=cfg.model.part.L_A)
    return rec.sign_sum, rec.unmet, rec.viol


def _phase_records(cfg: ExperimentConfig):
    rows = _map_realizations(_phase_counts_one, cfg)
    times = record_steps(cfg.t_max, cfg.record_stride)
    sign_sum = np.array([x[0] for x in rows], dtype=np.float64)
    unmet = np.array([x[1] for x in rows], dtype=np.float64)
    viol = np.array([x[2] for x in rows], dtype=np.int64)
    return times, sign_sum, unmet, viol


def estimate_entropy_and_pfraction(cfg: ExperimentConfig) -> tuple[TimeSeries, TimeSeries]:
    """Entropy from the phase sum and -ln of the never-met fraction, one pass.

    Both series come from the same realizations and pairs, so their
    difference carries strongly correlated errors (useful for comparisons).
    """
    times, sign_sum, unmet, viol = _phase_records(cfg)
    logpref = _log_prefactor(cfg)
    M = cfg.pairs
    base = config_dict(cfg)

    with np.errstate(divide="ignore", invalid="ignore"):
        s_vals = -(logpref + np.log(sign_sum / M))
        p_vals = -(logpref + np.log(unmet / M))
    s_vals[sign_sum <= 0] = np.nan
    p_vals[unmet <= 0] = np.nan

    meta_s = dict(base, estimator="entropy_phase_sum",
                  phase_violations=int(viol.sum()))
    meta_p = dict(base, estimator="neglog_pfraction")
    return (_two_level(times, s_vals, meta_s),
            _two_level(times, p_vals, meta_p))


def estimate_entropy_phase_sum(cfg: ExperimentConfig) -> TimeSeries:
    """Second Renyi entropy -ln Tr rho_A^2 from the four-string phase sum."""
    return estimate_entropy_and_pfraction(cfg)[0]


def estimate_p_fraction(cfg: ExperimentConfig) -> TimeSeries:
    """-ln of the weighted fraction of pairs whose species never met."""
    return estimate_entropy_and_pfraction(cfg)[1]


# ---------------------------------------------------------------------------
# displacement and density


def _field_counts_one(cfg: ExperimentConfig, r: int, payload) -> tuple:
    want_xt = payload
    real = _realization_for(cfg, r)
    if cfg.initial.kind in ("dead_region",) or want_xt:
        roles = _draw_a_difference_pair(cfg, _pair_rng(cfg, r))
    else:
        g = _pair_rng(cfg, r)
        part = cfg.model.part
        if cfg.sector.kind == "fixed":
            Q = cfg.sector.charge(part.L)
            from .lattice import sample_fixed_batch
            n1 = sample_fixed_batch(part.L, Q, cfg.pairs, g)
            n2 = sample_fixed_batch(part.L, Q, cfg.pairs, g)
        else:
            n1 = g.integers(0, 2, size=(cfg.pairs, part.L), dtype=np.uint8)
            n2 = g.integers(0, 2, size=(cfg.pairs, part.L), dtype=np.uint8)
        roles = np.stack([n1, n2])
    rec = kernels.run_field_pairs(real, roles,
                                  record_steps(cfg.t_max, cfg.record_stride),
                                  want_rightmost=want_xt)
    return rec.count, rec.rightmost


def estimate_displacement(cfg: ExperimentConfig) -> TimeSeries:
    """Mean displacement of the rightmost difference site for A-local pairs.

    Samples whose difference field dies are excluded from later times and
    counted in the metadata.
    """
    if cfg.initial.kind not in ("standard_pair", "dead_region"):
        raise ValueError("displacement runs need standard_pair or dead_region")
    rows = _map_realizations(_field_counts_one, cfg, payload=True)
    times = record_steps(cfg.t_max, cfg.record_stride)
    per_real = np.full((cfg.realizations, len(times)), np.nan)
    extinct_at_start = 0
    extinct_ever = 0
    for r, (_, xt) in enumerate(rows):
        x0 = xt[0]
        alive0 = x0 >= 0
        extinct_at_start += int(np.sum(~alive0))
        extinct_ever += int(np.sum((xt < 0).any(axis=0)))
        dl = xt.astype(np.float64) - x0[None, :].astype(np.float64)
        dl[:, ~alive0] = np.nan
        dl[xt < 0] = np.nan
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            per_real[r] = np.nanmean(dl, axis=1)
    meta = dict(config_dict(cfg), estimator="endpoint_displacement",
                extinct_at_start=extinct_at_start, extinct_ever=extinct_ever)
    return _two_level(times, per_real, meta)


def estimate_density(cfg: ExperimentConfig) -> TimeSeries:
    """Mean particle density of independently drawn sector pairs."""
    if cfg.sector.kind != "fixed":
        raise ValueError("density runs use fixed-sector pairs")
    rows = _map_realizations(_field_counts_one, cfg, payload=False)
    times = record_steps(cfg.t_max, cfg.record_stride)
    L = cfg.model.part.L
    per_real = np.array([c / (cfg.pairs * L) for c, _ in rows], dtype=np.float64)
    meta = dict(config_dict(cfg), estimator="particle_density",
                initial_pairs="independent_uniform_sector")
    return _two_level(times, per_real, meta)


# ---------------------------------------------------------------------------
# restricted-phase decay (four-site permutation model)


def _q_counts_one(cfg: ExperimentConfig, r: int, payload) -> np.ndarray:
    real = _realization_for(cfg, r)
    roles = _draw_a_difference_pair(cfg, _pair_rng(cfg, r))
    part = cfg.model.part
    rec = kernels.run_phase_pairs(
        real, roles, record_steps(cfg.t_max, cfg.record_stride),
        track_meeting=False, sgn_window=(part.L_A, part.L - 1),
        cz_touch=cfg.q_phase_touch)
    return rec.sign_sum


def estimate_q_decay(cfg: ExperimentConfig) -> TimeSeries:
    """-ln of the B-restricted phase average for pairs differing only in A."""
    if cfg.model.model != "cswap4":
        raise ValueError("the restricted-phase decay run is defined for cswap4")
    rows = _map_realizations(_q_counts_one, cfg)
    times = record_steps(cfg.t_max, cfg.record_stride)
    vals = np.array(rows, dtype=np.float64) / cfg.pairs
    with np.errstate(divide="ignore", invalid="ignore"):
        per_real = -np.log(vals)
    per_real[vals <= 0] = np.nan
    meta = dict(config_dict(cfg), estimator="neglog_qdecay",
                phase_region="touch" if cfg.q_phase_touch else "within")
    return _two_level(times, per_real, meta)


# ---------------------------------------------------------------------------
# spin autocorrelation


def _correlation_counts_one(cfg: ExperimentConfig, r: int, payload):
    offsets = payload
    part = cfg.model.part
    origin = part.L // 2 - 1
    g = _pair_rng(cfg, r)
    from .lattice import sample_fixed_batch
    Q = cfg.sector.charge(part.L)
    init = sample_fixed_batch(part.L, Q, cfg.pairs, g)
    plan = build_layer_plan(cfg.model)
    seed = _rng.derive(cfg.seed, _rng.STREAM_SAMPLES, r)
    rec = kernels.run_correlation(
        plan, init, seed, cfg.t_max, record_steps(cfg.t_max, cfg.record_stride),
        x_sites=np.array([origin + o for o in offsets], dtype=np.int64),
        origin=origin)
    return rec.prod_xor, rec.z_count, rec.z0_count


def estimate_correlation(cfg: ExperimentConfig, offsets=(0,)) -> dict[int, TimeSeries]:
    """Connected spin autocorrelation against the chain's middle site at t=0.

    One string per sample, fresh realization per sample.  The t=0 marginal
    uses the exact sector value 1-2*nu; offsets index sites relative to the
    origin site L//2 (1-based).
    """
    if cfg.sector.kind != "fixed" or cfg.initial.kind != "single_string":
        raise ValueError("correlation runs use single strings in a fixed sector")
    part = cfg.model.part
    origin = part.L // 2 - 1
    for o in offsets:
        if not 0 <= origin + o < part.L:
            raise ValueError(f"offset {o} leaves the lattice")
    rows = _map_realizations(_correlation_counts_one, cfg, payload=tuple(offsets))
    times = record_steps(cfg.t_max, cfg.record_stride)
    prod = np.sum([x[0] for x in rows], axis=0)
    zc = np.sum([x[1] for x in rows], axis=0)
    z0 = sum(x[2] for x in rows)
    M = cfg.pairs * cfg.realizations
    c_mean_z = 1.0 - 2.0 * float(cfg.sector.nu)
    m_z0 = 1.0 - 2.0 * z0 / M
    out = {}
    for i, o in enumerate(offsets):
        zz = 1.0 - 2.0 * prod[:, i] / M
        zx = 1.0 - 2.0 * zc[:, i] / M
        c = zz - zx * c_mean_z
        var = np.maximum(1.0 - 2.0 * c_mean_z * m_z0 + c_mean_z**2 - c**2, 0.0)
        stderr = np.sqrt(var / M)
        meta = dict(config_dict(cfg), estimator="spin_autocorrelation",
                    offset=o, origin_site_1based=origin + 1, samples=M)
        out[o] = TimeSeries(times=times, mean=c, stderr=stderr,
                            n_valid=np.full(len(times), M, dtype=np.int64),
                            meta=meta)
    return out
