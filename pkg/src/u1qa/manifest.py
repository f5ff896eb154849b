"""Manifest parsing, validation, and sweep expansion for the batch runner.

Manifests are INI files (configparser) with sections [experiment], [model],
[sector], [initial], [run], and optionally [sweep] and [correlation].  Sweep
keys hold comma-separated value lists; the cross product is expanded in a
fixed key order and every point is validated before anything runs.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from fractions import Fraction

from . import rng as _rng
from .circuit import ModelSpec
from .lattice import Partition, SectorSpec
from .observables import ExperimentConfig, InitialSpec

OBSERVABLES = ("entropy", "pfrac", "displacement", "density", "correlation", "qdecay")
SWEEP_ORDER = ("L", "L_A", "nu", "nu_A", "p_u", "p")


class ManifestError(ValueError):
    """Invalid manifest contents; the message names the offending field."""


def _frac(text: str) -> Fraction:
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError) as e:
        raise ManifestError(f"cannot parse fraction {text!r}") from e


def frac_label(v) -> str:
    """Filename-safe rendering of a sweep value."""
    s = str(v)
    return s.replace("/", "-").replace(".", "p")


@dataclass
class SweepPoint:
    label: str
    overrides: dict
    config: ExperimentConfig
    offsets: tuple[int, ...]


@dataclass
class RunManifest:
    name: str
    observable: str
    points: list[SweepPoint]
    workers: int
    seed: int
    source: dict = field(default_factory=dict)


def _required(cp, section, key):
    if not cp.has_option(section, key):
        raise ManifestError(f"missing [{section}] {key}")
    return cp.get(section, key)


def _build_config(raw: dict) -> ExperimentConfig:
    try:
        L = int(raw["L"])
        L_A = int(raw["L_A"]) if raw.get("L_A") not in (None, "") else L // 2
        part = Partition(L=L, L_A=L_A, boundary=raw["boundary"])
        model = ModelSpec(
            model=raw["kind"], part=part,
            p_u=float(raw["p_u"]), p=float(raw["p"]),
            cz_rate=float(raw.get("cz_rate", 1.0)),
            measure_per=raw.get("measure_per", "layer"),
        )
        sector_kind = raw["sector_kind"]
        sector = SectorSpec(sector_kind,
                            _frac(raw["nu"]) if sector_kind == "fixed" else None)
        initial = InitialSpec(
            kind=raw.get("initial_kind", "standard_pair"),
            nu_a=_frac(raw["nu_A"]) if raw.get("nu_A") not in (None, "") else None,
        )
        return ExperimentConfig(
            model=model, sector=sector, initial=initial,
            t_max=int(raw["t_max"]), realizations=int(raw["realizations"]),
            pairs=int(raw["pairs"]), seed=int(raw["seed"]),
            record_stride=int(raw.get("record_stride", 1)),
            workers=int(raw.get("workers", 1)),
            q_phase_touch=raw.get("q_phase_touch", "false").lower() == "true",
        )
    except ManifestError:
        raise
    except (KeyError, ValueError) as e:
        raise ManifestError(f"invalid configuration: {e}") from e


def load_manifest(path, *, seed_override: int | None = None,
                  workers_override: int | None = None) -> RunManifest:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = cp.read(path)
    if not read:
        raise ManifestError(f"cannot read manifest {path}")

    name = _required(cp, "experiment", "name")
    observable = _required(cp, "experiment", "observable")
    if observable not in OBSERVABLES:
        raise ManifestError(
            f"[experiment] observable must be one of {OBSERVABLES}, got {observable!r}")

    raw = {
        "kind": _required(cp, "model", "kind"),
        "L": _required(cp, "model", "L"),
        "L_A": cp.get("model", "L_A", fallback=""),
        "boundary": cp.get("model", "boundary",
                           fallback="open" if observable == "displacement" else "periodic"),
        "p_u": _required(cp, "model", "p_u"),
        "p": _required(cp, "model", "p"),
        "cz_rate": cp.get("model", "cz_rate", fallback="1.0"),
        "measure_per": cp.get("model", "measure_per", fallback="layer"),
        "sector_kind": _required(cp, "sector", "kind"),
        "nu": cp.get("sector", "nu", fallback=""),
        "initial_kind": cp.get("initial", "kind", fallback="standard_pair"),
        "nu_A": cp.get("initial", "nu_A", fallback=""),
        "t_max": _required(cp, "run", "t_max"),
        "realizations": _required(cp, "run", "realizations"),
        "pairs": _required(cp, "run", "pairs"),
        "seed": _required(cp, "run", "seed"),
        "record_stride": cp.get("run", "record_stride", fallback="1"),
        "workers": cp.get("run", "workers", fallback="1"),
        "q_phase_touch": cp.get("run", "q_phase_touch", fallback="false"),
    }
    if seed_override is not None:
        raw["seed"] = str(seed_override)
    if workers_override is not None:
        raw["workers"] = str(workers_override)

    offsets = tuple(
        int(x) for x in cp.get("correlation", "offsets", fallback="0").split(",")
    )

    sweeps: dict[str, list[str]] = {}
    if cp.has_section("sweep"):
        for key in cp.options("sweep"):
            norm = {"l": "L", "l_a": "L_A", "nu": "nu", "nu_a": "nu_A",
                    "p_u": "p_u", "p": "p"}.get(key)
            if norm is None:
                raise ManifestError(f"unknown sweep key {key!r}")
            sweeps[norm] = [v.strip() for v in cp.get("sweep", key).split(",")]

    points: list[SweepPoint] = []
    combos: list[dict] = [{}]
    for key in SWEEP_ORDER:
        if key not in sweeps:
            continue
        combos = [dict(c, **{key: v}) for c in combos for v in sweeps[key]]
    for i, combo in enumerate(combos):
        raw_pt = dict(raw)
        for key, v in combo.items():
            raw_pt[key] = v
            if key == "L" and "L_A" not in combo and not raw["L_A"]:
                raw_pt["L_A"] = ""
        # independent substream per sweep point, derived from the master seed
        raw_pt["seed"] = str(_rng.derive(int(raw["seed"]), _rng.STREAM_POINT, i))
        cfg = _build_config(raw_pt)
        label = name if not combo else (
            name + "__" + "_".join(f"{k}{frac_label(v)}" for k, v in combo.items()))
        points.append(SweepPoint(label=label, overrides=dict(combo), config=cfg,
                                 offsets=offsets))

    return RunManifest(name=name, observable=observable, points=points,
                       workers=int(raw["workers"]), seed=int(raw["seed"]),
                       source={s: dict(cp.items(s)) for s in cp.sections()})
