"""Experiment runner: config parsing, FedKT runs, baselines, sweeps and reports."""

from __future__ import annotations

import copy
import json
import math
import time
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Sequence

import jsonschema
import numpy as np

from ..domain import Dataset, PrivacyLevel, make_rng
from ..models import ModelSpec, fit
from ..partition import dirichlet_partition, homogeneous_partition, make_local_split
from ..transfer import FedKtConfig, run_fedkt, vote_matrix
from .data import SYNTHETIC_TASKS, atomic_write, load_dataset, split_train_public_test

SCHEMA_VERSION = 1
SWEEP_KEYS = ("query_fraction", "public_fraction", "s", "t", "gamma", "n", "beta")

# role tags for harness-level rng streams (disjoint from the protocol's)
_SPLIT, _PARTITION, _PUBLIC, _SOLO, _PATE_SPLIT, _PATE_TEACHER, _PATE_STUDENT, _SYNTH = range(101, 109)
_HARNESS = 2_000_000


class StageError(RuntimeError):
    """A failure inside one experiment stage; ``stage`` names it."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        self.message = message
        super().__init__(f"[{stage}] {message}")

    def to_dict(self) -> dict:
        return {"stage": self.stage, "message": self.message}


def _load_schema(name: str) -> dict:
    return json.loads(resources.files("fedkt.harness").joinpath(name).read_text())


def report_schema() -> dict:
    return _load_schema("report_schema.json")


def config_schema() -> dict:
    return _load_schema("config_schema.json")


def validate_report(report: dict) -> None:
    jsonschema.validate(report, report_schema())


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one run needs. ``dataset`` is either ``{"path", "format"}``
    or ``{"synthetic": "blobs"|"xor", ...generator kwargs}``."""

    dataset: dict
    fedkt: FedKtConfig
    split: tuple[float, float, float] = (0.75, 0.125, 0.125)
    public_fraction: float = 1.0
    partition: str = "dirichlet"
    beta: float = 0.5
    solo: bool = True
    pate: bool = True
    pate_teachers: Optional[int] = None
    solo_spec: Optional[ModelSpec] = None
    seed: int = 0
    fedavg_rounds: int = 10
    out: Optional[str] = None

    def __post_init__(self):
        if len(self.split) != 3 or min(self.split) <= 0 or not math.isclose(sum(self.split), 1.0, abs_tol=1e-9):
            raise ValueError("split fractions must be three positive numbers summing to 1")
        if self.partition not in ("dirichlet", "homogeneous"):
            raise ValueError(f"unknown partition scheme {self.partition!r}")
        if self.partition == "dirichlet" and not self.beta > 0:
            raise ValueError("beta must be > 0 for the dirichlet scheme")
        if not 0.0 < self.public_fraction <= 1.0:
            raise ValueError("public_fraction must lie in (0, 1]")
        if self.pate_teachers is not None and self.pate_teachers < 1:
            raise ValueError("pate_teachers must be >= 1")
        if self.fedkt.seed != self.seed:
            object.__setattr__(self, "fedkt", replace(self.fedkt, seed=self.seed))

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        jsonschema.validate(raw, config_schema())
        raw = copy.deepcopy(raw)
        seed = int(raw.get("seed", 0))
        fk = dict(raw.get("fedkt", {}))
        for key in ("teacher_spec", "student_spec", "final_spec"):
            if key in fk:
                fk[key] = ModelSpec.from_dict(fk[key])
        fk["seed"] = seed
        part = raw.get("partition", {})
        baselines = raw.get("baselines", {})
        return cls(
            dataset=raw["dataset"],
            fedkt=FedKtConfig(**fk),
            split=tuple(raw.get("split", (0.75, 0.125, 0.125))),
            public_fraction=float(raw.get("public_fraction", 1.0)),
            partition=part.get("scheme", "dirichlet"),
            beta=float(part.get("beta", 0.5)),
            solo=bool(baselines.get("solo", True)),
            pate=bool(baselines.get("pate", True)),
            pate_teachers=baselines.get("pate_teachers"),
            solo_spec=ModelSpec.from_dict(baselines["solo_spec"]) if "solo_spec" in baselines else None,
            seed=seed,
            fedavg_rounds=int(raw.get("fedavg_rounds", 10)),
            out=raw.get("out"),
        )

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            raw = json.load(fh)
        ds = raw.get("dataset", {})
        # relative dataset paths resolve against the config file
        if "path" in ds and not Path(ds["path"]).is_absolute():
            candidate = Path(path).parent / ds["path"]
            if candidate.exists():
                ds["path"] = str(candidate)
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        fk = self.fedkt.to_dict()
        fk.pop("seed")
        return {
            "dataset": self.dataset,
            "split": list(self.split),
            "public_fraction": self.public_fraction,
            "partition": {"scheme": self.partition, "beta": self.beta},
            "fedkt": fk,
            "baselines": {
                "solo": self.solo,
                "pate": self.pate,
                "pate_teachers": self.pate_teachers,
                **({"solo_spec": self.solo_spec.to_dict()} if self.solo_spec else {}),
            },
            "seed": self.seed,
            "fedavg_rounds": self.fedavg_rounds,
            "out": self.out,
        }

    def with_value(self, key: str, value) -> "ExperimentConfig":
        """Copy with one sweepable parameter changed."""
        if key == "public_fraction":
            return replace(self, public_fraction=float(value))
        if key == "beta":
            return replace(self, beta=float(value))
        if key == "seed":
            return replace(self, seed=int(value), fedkt=replace(self.fedkt, seed=int(value)))
        if key in ("s", "t", "n"):
            return replace(self, fedkt=replace(self.fedkt, **{key: int(value)}))
        if key in ("query_fraction", "gamma", "delta"):
            return replace(self, fedkt=replace(self.fedkt, **{key: float(value)}))
        if key == "level":
            return replace(self, fedkt=replace(self.fedkt, level=PrivacyLevel.parse(value)))
        raise ValueError(f"cannot vary {key!r}; choose from {SWEEP_KEYS + ('seed', 'level', 'delta')}")


# baselines ---------------------------------------------------------------

def solo_accuracies(parties: Sequence[Dataset], test: Dataset, spec: ModelSpec, seed: int = 0) -> list[float]:
    return [
        fit(spec, local, make_rng(seed, _HARNESS, i, _SOLO)).accuracy(test.X, test.y)
        for i, local in enumerate(parties)
    ]


def baseline_solo(parties: Sequence[Dataset], test: Dataset, spec: ModelSpec, seed: int = 0) -> float:
    """Mean test accuracy of models trained on each party's data alone."""
    if any(len(p) == 0 for p in parties):
        raise ValueError("every party needs local data")
    return float(np.mean(solo_accuracies(parties, test, spec, seed)))


def baseline_centralized_pate(train: Dataset, public: Dataset, test: Dataset, t_total: int,
                              spec: ModelSpec, seed: int = 0, teacher_spec: Optional[ModelSpec] = None) -> float:
    """Single-holder PATE without noise: ``t_total`` teachers on disjoint
    slices of the whole train set, majority labels on ``public``, one student."""
    if len(train) < t_total:
        raise ValueError(f"train set of {len(train)} cannot feed {t_total} teachers")
    teacher_spec = teacher_spec or spec
    split = make_local_split(len(train), 1, t_total, make_rng(seed, _HARNESS, 0, _PATE_SPLIT))
    teachers = [
        fit(teacher_spec, train.subset(ix), make_rng(seed, _HARNESS, k, _PATE_TEACHER))
        for k, ix in enumerate(split.subsets[0])
    ]
    labels = vote_matrix(teachers, np.asarray(public.X), train.num_classes).argmax(axis=1)
    student = fit(spec, Dataset(public.X, labels, train.num_classes), make_rng(seed, _HARNESS, 0, _PATE_STUDENT))
    return student.accuracy(test.X, test.y)


# run -----------------------------------------------------------------------

def _deviation_notes(cfg: ExperimentConfig, data_info: dict) -> list[str]:
    notes = [
        "Dirichlet label skew draws one proportion vector per class, in class order, from a single rng stream.",
        "When query_fraction < 1 it limits the noised tier only; the noise-free tier answers the whole public set.",
    ]
    for role in ("teacher_spec", "student_spec", "final_spec"):
        spec = getattr(cfg.fedkt, role)
        if spec.kind == "random_forest" and spec.n_trees != 100:
            notes.append(f"{role}: random forest with {spec.n_trees} trees (reference setup uses 100).")
    if data_info.get("one_hot_columns"):
        notes.append(
            f"categorical columns one-hot encoded; feature dimension {data_info['dim']}."
        )
    if not cfg.fedkt.consistent_voting:
        notes.append("consistent voting disabled (non-default); example-level L1 epsilon reported separately.")
    return notes


def _load(cfg: ExperimentConfig) -> tuple[Dataset, dict]:
    ds = dict(cfg.dataset)
    if "synthetic" in ds:
        task = ds.pop("synthetic")
        if task not in SYNTHETIC_TASKS:
            raise ValueError(f"unknown synthetic task {task!r}")
        data = SYNTHETIC_TASKS[task](rng=make_rng(cfg.seed, _HARNESS, 0, _SYNTH), **ds)
        info = {"source": f"synthetic:{task}"}
    else:
        data = load_dataset(ds["path"], ds.get("format"))
        info = {"source": str(ds["path"]), "format": ds.get("format") or "auto"}
    info.update(
        n_examples=len(data),
        dim=data.dim,
        num_classes=data.num_classes,
        label_mapping={str(name): i for i, name in enumerate(data.label_names)} if data.label_names else {},
        one_hot_columns=sum(1 for f in data.feature_names if "=" in f),
        class_counts=data.class_counts().tolist(),
    )
    return data, info


def select_public(public: Dataset, fraction: float, seed: int) -> Dataset:
    """First ``ceil(fraction * |public|)`` rows of a seeded shuffle."""
    k = max(1, math.ceil(fraction * len(public) - 1e-9))
    return public.subset(np.sort(make_rng(seed, _HARNESS, 0, _PUBLIC).permutation(len(public))[:k]))


class _Stage:
    def __init__(self, name: str, timings: dict):
        self.name, self.timings = name, timings

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.timings[self.name] = time.perf_counter() - self.t0
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, f"{type(exc).__name__}: {exc}") from exc
        return False


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> dict:
    """Partition, FedKT, baselines, evaluation; returns (and optionally writes) the report."""
    timings: dict[str, float] = {}
    with _Stage("load", timings):
        data, info = _load(cfg)
        if cfg.fedkt.num_classes is not None and cfg.fedkt.num_classes != data.num_classes:
            raise ValueError(f"config says {cfg.fedkt.num_classes} classes, data has {data.num_classes}")
    with _Stage("split", timings):
        train, public, test = split_train_public_test(data, cfg.split, make_rng(cfg.seed, _HARNESS, 0, _SPLIT))
        aux = select_public(public, cfg.public_fraction, cfg.seed)
    with _Stage("partition", timings):
        prng = make_rng(cfg.seed, _HARNESS, 0, _PARTITION)
        if cfg.partition == "dirichlet":
            layout = dirichlet_partition(train, cfg.fedkt.n, cfg.beta, prng, min_size=cfg.fedkt.t)
        else:
            layout = homogeneous_partition(train, cfg.fedkt.n, prng)
        layout.check(len(train))
        parties = layout.party_datasets(train)
    with _Stage("fedkt", timings):
        result = run_fedkt(parties, aux.unlabeled(), cfg.fedkt, cfg.fedavg_rounds)
        fedkt_report = result.report(test)
    accuracy = {"fedkt": fedkt_report["final_test_accuracy"]}
    baselines: dict[str, Any] = {}
    if cfg.solo:
        with _Stage("solo", timings):
            per_party = solo_accuracies(parties, test, cfg.solo_spec or cfg.fedkt.final_spec, cfg.seed)
            accuracy["solo"] = float(np.mean(per_party))
            baselines["solo_per_party"] = per_party
    if cfg.pate:
        with _Stage("pate", timings):
            t_total = cfg.pate_teachers or cfg.fedkt.n
            accuracy["pate"] = baseline_centralized_pate(
                train, aux, test, t_total, cfg.fedkt.final_spec, cfg.seed, cfg.fedkt.teacher_spec
            )
            baselines["pate_teachers"] = t_total

    report = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.to_dict(),
        "dataset": {
            **info,
            "split_sizes": [len(train), len(public), len(test)],
            "aux_size": len(aux),
        },
        "partition": layout.summary(train),
        "accuracy": accuracy,
        "baselines": baselines,
        "fedkt": fedkt_report,
        "privacy": fedkt_report["privacy"],
        "communication": fedkt_report["communication"],
        "deviations": _deviation_notes(cfg, info),
        "timings": timings,
    }
    validate_report(report)
    if write and cfg.out:
        write_report(report, cfg.out)
    return report


def write_report(report: dict, path) -> Path:
    path = Path(path)
    atomic_write(path, json.dumps(report, indent=2, sort_keys=True) + "\n")
    return path


def strip_timings(report: dict) -> dict:
    """Report minus wall-clock fields, for determinism comparisons."""
    out = copy.deepcopy(report)
    out.pop("timings", None)
    for point in out.get("points", []):
        point.get("report", {}).pop("timings", None)
    return out


def run_sweep(cfg: ExperimentConfig, key: str, values: Sequence, write: bool = True) -> dict:
    """One report per value of ``key``; a failing point is recorded, not fatal."""
    if key not in SWEEP_KEYS:
        raise ValueError(f"cannot sweep {key!r}; choose from {SWEEP_KEYS}")
    points = []
    for v in values:
        point_cfg = cfg.with_value(key, v)
        try:
            points.append({"value": v, "report": run_experiment(point_cfg, write=False)})
        except StageError as exc:
            points.append({"value": v, "error": exc.to_dict()})
    summary = {
        "schema_version": SCHEMA_VERSION,
        "sweep": key,
        "values": list(values),
        "points": points,
        "accuracy": [p["report"]["accuracy"] if "report" in p else None for p in points],
    }
    if write and cfg.out:
        write_report(summary, cfg.out)
    return summary


def parse_sweep(text: str) -> tuple[str, list]:
    """``"key=v1,v2"`` -> (key, [v1, v2]) with numeric values parsed."""
    key, sep, vals = text.partition("=")
    key = key.strip()
    if not sep or not vals.strip():
        raise ValueError(f"malformed sweep {text!r}; expected key=v1,v2,...")
    out = []
    for tok in vals.split(","):
        tok = tok.strip()
        try:
            out.append(int(tok))
        except ValueError:
            out.append(float(tok))
    return key, out
