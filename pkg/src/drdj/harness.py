"""Experiment orchestration, evaluation and JSON reports."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .baselines import BaselineConfig, train_baseline
from .data import (
    AuxDataset, CsvSchema, FullDataset, LabeledDataset, SplitSpec, add_intercept_column,
    fit_standardization, gen_synthetic, load_csv, split_indices,
)
from .errors import DataError, EmptyDatasetError
from .fairness import FairnessConfig, train_fair
from .objective import SolverConfig
from .solver import TrainedModel, predict_labels, train

REPORT_VERSION = 1

# Hyperparameter presets per dataset. Every preset averages the pair terms
# over the match set; see SolverConfig.normalization.
_DJ_TABLE = {
    "breast_cancer_m1_5": {"r_A": 0.65, "r_P": 0.65, "kappa_A": 5.0, "kappa_P": 5.0, "k": 1},
    "breast_cancer_m1_25": {"r_A": 1.65, "r_P": 1.65, "kappa_A": 5.0, "kappa_P": 5.0, "k": 1},
    "ionosphere_m1_4": {"r_A": 0.3, "r_P": 0.3, "kappa_A": 10.0, "kappa_P": 10.0, "k": 1},
    "ionosphere_m1_25": {"r_A": 1.5, "r_P": 1.5, "kappa_A": 5.0, "kappa_P": 5.0, "k": 1},
    "heart_disease": {"r_A": 0.65, "r_P": 0.65, "kappa_A": 10.0, "kappa_P": 10.0, "k": 1},
    "one_vs_eight": {"r_A": 1.85, "r_P": 1.85, "kappa_A": 5.0, "kappa_P": 5.0, "k": 1},
    "synthetic": {"r_A": 0.65, "r_P": 0.65, "kappa_A": 5.0, "kappa_P": 5.0, "k": 1},
}
DJ_PRESETS = {name: {**p, "normalization": "matches"} for name, p in _DJ_TABLE.items()}
RLR_PRESETS = {  # (RLR, RLRO) penalty weights
    "breast_cancer_m1_5": (0.07, 0.04), "breast_cancer_m1_25": (0.04, 0.04),
    "ionosphere_m1_4": (0.02, 0.02), "ionosphere_m1_25": (0.01, 0.02),
    "heart_disease": (0.08, 0.03), "one_vs_eight": (0.08, 0.08),
}

METHOD_KINDS = ("dj", "dj_fair", "lr", "rlr", "drlr", "lro", "rlro", "full")


# --------------------------------------------------------------------------
# Experiment description
# --------------------------------------------------------------------------


@dataclass
class MethodSpec:
    name: str
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in METHOD_KINDS:
            raise ValueError(f"unknown method kind {self.kind!r}")
        # validate eagerly so a bad spec fails before any training
        self.solver_config()
        self.baseline_config()
        self.fairness_config()

    def solver_config(self) -> Optional[SolverConfig]:
        if self.kind not in ("dj", "dj_fair"):
            return None
        p = {k: v for k, v in self.params.items() if k != "fairness"}
        return SolverConfig.from_dict(p)

    def fairness_config(self) -> Optional[FairnessConfig]:
        if self.kind != "dj_fair":
            return None
        return FairnessConfig.from_dict(self.params.get("fairness", {}))

    def baseline_config(self) -> Optional[BaselineConfig]:
        if self.kind in ("dj", "dj_fair"):
            return None
        kind = {"lro": "lr", "full": "lr", "rlro": "rlr"}.get(self.kind, self.kind)
        return BaselineConfig.from_dict({**self.params, "kind": kind})

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind, "params": self.params}


@dataclass
class ExperimentSpec:
    """``dataset`` is ``{"source": "synthetic"}`` or
    ``{"source": "csv", "path", "features", "aux", "label"}``."""

    dataset: dict
    methods: list
    split: dict = field(default_factory=dict)
    repetitions: int = 10
    seed: int = 0
    standardize: bool = True
    add_intercept: bool = False
    output: Optional[str] = None

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        src = self.dataset.get("source")
        if src not in ("synthetic", "csv"):
            raise ValueError("dataset.source must be 'synthetic' or 'csv'")
        if src == "csv":
            for key in ("path", "features", "aux", "label"):
                if key not in self.dataset:
                    raise ValueError(f"csv dataset needs {key!r}")
            SplitSpec(**{"n_P": 0, "v": 0, **self.split})
        self.methods = [m if isinstance(m, MethodSpec) else MethodSpec(**m) for m in self.methods]
        names = [m.name for m in self.methods]
        if len(set(names)) != len(names):
            raise ValueError("method names must be unique")

    @classmethod
    def from_dict(cls, d) -> "ExperimentSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown experiment keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "ExperimentSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {"dataset": self.dataset, "methods": [m.to_dict() for m in self.methods],
                "split": self.split, "repetitions": self.repetitions, "seed": self.seed,
                "standardize": self.standardize, "add_intercept": self.add_intercept,
                "output": self.output}


def synthetic_spec(repetitions: int = 10, seed: int = 0, T: int = 1500) -> ExperimentSpec:
    """The synthetic distribution-shift comparison of DJ against the three baselines."""
    return ExperimentSpec(
        dataset={"source": "synthetic"},
        methods=[
            {"name": "LR", "kind": "lr", "params": {"T": T}},
            {"name": "RLR", "kind": "rlr", "params": {"lam": 10.0, "T": T}},
            {"name": "DRLR", "kind": "drlr", "params": {"r": 100.0, "kappa": 10.0, "T": T}},
            {"name": "DJ", "kind": "dj", "params": {**DJ_PRESETS["synthetic"], "T": T}},
        ],
        repetitions=repetitions, seed=seed, standardize=True,
    )


# --------------------------------------------------------------------------
# One repetition
# --------------------------------------------------------------------------


@dataclass
class RunData:
    labeled: LabeledDataset
    aux: AuxDataset
    test: FullDataset
    overlap: Optional[FullDataset] = None
    full_train: Optional[FullDataset] = None
    stats: Optional[dict] = None


def _load_full(dataset: dict) -> FullDataset:
    schema = CsvSchema(dataset["features"], dataset["label"], dataset["aux"])
    full = load_csv(dataset["path"], schema)
    if not isinstance(full, FullDataset):
        raise DataError("experiment csv must declare features, auxiliary columns and a label")
    return full


def prepare_run(spec: ExperimentSpec, seed_r: int, full: Optional[FullDataset] = None) -> RunData:
    if spec.dataset["source"] == "synthetic":
        sp, sa, te = gen_synthetic(seed_r)
        run = RunData(sp, sa, te)
        train_X = np.vstack([sp.X, sa.X])
        train_A = sa.A
    else:
        split = SplitSpec(**{**spec.split, "seed": seed_r})
        idx = split_indices(full.n, split)
        tr = full.take(idx.train)
        n_P, v = split.n_P, split.v
        lab = full.take(idx.labeled)
        aux = full.take(idx.aux)
        ov = full.take(idx.labeled[n_P:]) if v > 0 else None
        run = RunData(lab.labeled(), aux.aux(), full.take(idx.test), ov, tr)
        train_X, train_A = tr.X, tr.A
    if spec.standardize:
        sx = fit_standardization(train_X)
        sa_ = fit_standardization(train_A) if train_A.shape[1] else None

        def fx(X):
            return sx.apply(X)

        def fa(A):
            return sa_.apply(A) if sa_ is not None else A

        run = _map_run(run, fx, fa)
        run.stats = {"x": sx.to_dict(), "a": None if sa_ is None else sa_.to_dict()}
    if spec.add_intercept:
        run = _map_run(run, add_intercept_column, lambda A: A)
    return run


def _map_run(run: RunData, fx, fa) -> RunData:
    def full_map(d):
        return None if d is None else FullDataset(fx(d.X), fa(d.A), d.y)

    return RunData(LabeledDataset(fx(run.labeled.X), run.labeled.y), AuxDataset(fx(run.aux.X), fa(run.aux.A)),
                   full_map(run.test), full_map(run.overlap), full_map(run.full_train), run.stats)


def evaluate(model: TrainedModel, test: FullDataset) -> float:
    """Fraction of test rows whose predicted sign matches the label."""
    if test is None or test.n == 0:
        raise EmptyDatasetError("empty test set")
    A = test.A if model.uses_aux else None
    if not model.uses_aux and model.model.theta2.size:
        raise ValueError("model expects auxiliary features")
    return float(np.mean(predict_labels(model, test.X, A) == test.y))


def fit_method(method: MethodSpec, run: RunData) -> TrainedModel:
    m1 = run.labeled.m1
    if method.kind == "dj":
        return train(run.aux, run.labeled, method.solver_config())
    if method.kind == "dj_fair":
        return train_fair(run.aux, run.labeled, method.solver_config(), method.fairness_config())
    cfg = method.baseline_config()
    if method.kind in ("lr", "rlr", "drlr"):
        return train_baseline(run.labeled.X, run.labeled.y, cfg)
    rows = run.overlap if method.kind in ("lro", "rlro") else run.full_train
    if rows is None:
        what = "overlap rows" if method.kind in ("lro", "rlro") else "fully observed training rows"
        raise DataError(f"{method.kind} needs {what}, which this dataset does not provide")
    return train_baseline(np.hstack([rows.X, rows.A]), rows.y, cfg, m1=m1)


def _summary(model: TrainedModel) -> dict:
    out = {"objective": model.objective}
    if "feasibility" in model.extra:
        out["feasibility"] = model.extra["feasibility"]
    if "branch_objectives" in model.extra:
        out["branch"] = model.model.branch
    return out


def run_experiment(spec: ExperimentSpec, progress=None) -> dict:
    """Run every method on every repetition; repetition ``r`` uses seed ``spec.seed + r``."""
    full = _load_full(spec.dataset) if spec.dataset["source"] == "csv" else None
    runs = []
    t_start = time.perf_counter()
    for r in range(spec.repetitions):
        seed_r = spec.seed + r
        run = prepare_run(spec, seed_r, full)
        results = {}
        for method in spec.methods:
            t0 = time.perf_counter()
            try:
                model = fit_method(method, run)
                acc = evaluate(model, run.test)
                results[method.name] = {"accuracy": acc, **_summary(model),
                                        "time_s": time.perf_counter() - t0}
            except Exception as exc:  # recorded per run; other methods continue
                results[method.name] = {"error": f"{type(exc).__name__}: {exc}",
                                        "time_s": time.perf_counter() - t0}
            if progress is not None:
                progress(r, method.name, results[method.name])
        runs.append({"repetition": r, "seed": seed_r, "results": results})
    return build_report(spec, runs, time.perf_counter() - t_start)


def build_report(spec: ExperimentSpec, runs: list, elapsed: float) -> dict:
    methods = {}
    for m in spec.methods:
        accs = [run["results"][m.name]["accuracy"] for run in runs if "accuracy" in run["results"][m.name]]
        methods[m.name] = {
            "kind": m.kind,
            "mean": float(np.mean(accs)) if accs else None,
            "std": float(np.std(accs)) if accs else None,
            "n_ok": len(accs),
            "n_failed": len(runs) - len(accs),
        }
    return {"version": REPORT_VERSION, "spec": spec.to_dict(), "methods": methods, "runs": runs,
            "elapsed_s": elapsed, "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())}


VOLATILE_KEYS = ("time_s", "elapsed_s", "timestamp")


def strip_volatile(obj):
    """Copy of a report without timing fields, for determinism comparisons."""
    if isinstance(obj, dict):
        return {k: strip_volatile(v) for k, v in obj.items() if k not in VOLATILE_KEYS}
    if isinstance(obj, list):
        return [strip_volatile(v) for v in obj]
    return obj


# --------------------------------------------------------------------------
# JSON output with 17 significant digits
# --------------------------------------------------------------------------


def format_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    text = format(x, ".17g")
    if not any(ch in text for ch in ".en"):
        text += ".0"
    return text


def dumps(obj: Any, indent: int = 2, _level: int = 0) -> str:
    """JSON text in which every float carries 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (float, np.floating)):
        return format_float(float(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist(), indent, _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.number)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(obj, path) -> None:
    Path(path).write_text(dumps(obj) + "\n", encoding="utf-8")


def format_table(report: dict) -> str:
    lines = [f"{'method':<10} {'mean':>24} {'std':>24} {'runs':>5}"]
    for name, m in report["methods"].items():
        mean = "failed" if m["mean"] is None else format_float(m["mean"])
        std = "" if m["std"] is None else format_float(m["std"])
        lines.append(f"{name:<10} {mean:>24} {std:>24} {m['n_ok']:>5}")
    return "\n".join(lines)
