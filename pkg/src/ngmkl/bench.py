"""Repeated-split benchmark harness for the MKL baseline and the NGMKL variants.

An experiment is a grid of (dataset, method, repetition) cells.  Each cell
draws its split from the manifest plan, fits ``RangeScaler -> classifier``
on the training part and records the test error in percent.  Cells fail
independently; a failure is kept in the report with its reason.

Config files are JSON::

    {
      "manifest": "data/manifest.json",     # relative to the config file
      "datasets": ["sonar", "thyroid"],     # default: every manifest entry
      "methods": ["mkl", "ngmkl1", "ngmkl2", "ngmkl3"],
      "repetitions": 10,                    # default: per-dataset manifest value
      "base_seed": 0,
      "c_reg": 1.0,
      "l1_threshold": 0.001,
      "boost_rounds": 20,
      "boost_sample_fraction": 0.5,         # null: sample-weighted weak SVMs
      "train": {"epochs": 1000, "hidden_sizes": [64]},
      "output": "results"                   # optional output folder
    }
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path

import numpy as np
from sklearn.pipeline import make_pipeline

from .data import RangeScaler, load_manifest, make_split
from .mkl import MKLClassifier
from .network import NGMKLClassifier, TrainConfig, curve_csv
from .selection import ALL, BOOST_D1, L1_SPARSE, diagnostics_csv

log = logging.getLogger(__name__)

MKL = "mkl"
NGMKL1 = "ngmkl1"
NGMKL2 = "ngmkl2"
NGMKL3 = "ngmkl3"
METHODS = (MKL, NGMKL1, NGMKL2, NGMKL3)
_SELECTION = {NGMKL1: ALL, NGMKL2: L1_SPARSE, NGMKL3: BOOST_D1}

WORKERS_ENV = "NGMKL_WORKERS"

_TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"seed"}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to rerun an experiment bit for bit."""

    manifest: Path
    methods: tuple = METHODS
    datasets: tuple | None = None
    repetitions: int | None = None
    base_seed: int = 0
    c_reg: float = 1.0
    l1_threshold: float = 1e-3
    boost_rounds: int = 20
    boost_sample_fraction: float | None = 0.5
    train: dict = field(default_factory=dict)
    output: Path | None = None

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        if not self.methods:
            raise ValueError("at least one method is required")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown method(s) {unknown}; expected {list(METHODS)}")
        if self.datasets is not None:
            object.__setattr__(self, "datasets", tuple(self.datasets))
        if self.repetitions is not None and self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        bad = set(self.train) - _TRAIN_KEYS
        if bad:
            raise ValueError(f"unknown train option(s) {sorted(bad)}")
        object.__setattr__(self, "manifest", Path(self.manifest))
        if self.output is not None:
            object.__setattr__(self, "output", Path(self.output))

    @classmethod
    def from_dict(cls, raw, base_dir=None):
        raw = dict(raw)
        known = {f.name for f in fields(cls)}
        extra = set(raw) - known
        if extra:
            raise ValueError(f"unknown config key(s) {sorted(extra)}")
        if "manifest" not in raw:
            raise ValueError("config needs a 'manifest' entry")
        for key in ("manifest", "output"):
            if raw.get(key) is not None:
                p = Path(raw[key])
                if base_dir is not None and not p.is_absolute():
                    p = Path(base_dir) / p
                raw[key] = p
        return cls(**raw)

    def train_config(self, seed):
        opts = dict(self.train)
        if "hidden_sizes" in opts:
            opts["hidden_sizes"] = tuple(opts["hidden_sizes"])
        return TrainConfig(seed=seed, **opts)

    def to_dict(self):
        out = asdict(self)
        out["manifest"] = str(self.manifest)
        out["output"] = None if self.output is None else str(self.output)
        return out


def load_config(path):
    path = Path(path)
    return ExperimentConfig.from_dict(json.loads(path.read_text()), path.parent)


# ---------------------------------------------------------------------------
# Single cells


def make_estimator(method, config, seed):
    if method == MKL:
        return make_pipeline(RangeScaler(), MKLClassifier(C=config.c_reg))
    if method not in _SELECTION:
        raise ValueError(f"unknown method {method!r}")
    tc = config.train_config(seed)
    clf = NGMKLClassifier(
        selection=_SELECTION[method], hidden_sizes=tc.hidden_sizes, batch_size=tc.batch_size,
        learning_rate=tc.learning_rate, weight_decay=tc.weight_decay, epochs=tc.epochs,
        C=config.c_reg, l1_threshold=config.l1_threshold, boost_rounds=config.boost_rounds,
        boost_sample_fraction=config.boost_sample_fraction,
        kernel_activation=tc.kernel_activation, hidden_activation=tc.hidden_activation,
        use_bias=tc.use_bias, random_state=seed,
    )
    return make_pipeline(RangeScaler(), clf)


def error_percent(predicted, truth):
    predicted, truth = np.asarray(predicted), np.asarray(truth)
    if predicted.shape != truth.shape or truth.size == 0:
        raise ValueError("need equally long, non-empty prediction and label vectors")
    return 100.0 * (1.0 - float(np.mean(predicted == truth)))


def run_method(method, train, test, config, seed=0):
    """Fit ``method`` on ``train`` and return ``(test error %, fitted pipeline)``.

    Only the training split reaches the scaler, the kernel selection and
    the optimiser.
    """
    if method == MKL and train.class_count != 2:
        raise ValueError(f"mkl is binary only, {train.name or 'dataset'} has "
                         f"{train.class_count} classes")
    pipe = make_estimator(method, config, seed)
    pipe.fit(train.features, train.labels)
    return error_percent(pipe.predict(test.features), test.labels), pipe


@dataclass(frozen=True)
class CellResult:
    dataset: str
    method: str
    rep: int
    error: float | None
    reason: str = ""
    seconds: float = 0.0
    curve: str = ""
    selection: str = ""

    @property
    def ok(self):
        return self.error is not None


def _run_cell(args):
    method, train, test, config, rep, seed = args
    start = time.perf_counter()
    try:
        err, pipe = run_method(method, train, test, config, seed)
    except Exception as exc:  # fault isolation: record and move on
        log.warning("%s/%s rep %d failed: %s", train.name, method, rep, exc)
        return CellResult(train.name, method, rep, None, f"{type(exc).__name__}: {exc}",
                          time.perf_counter() - start)
    clf = pipe[-1]
    curve = selection = ""
    if isinstance(clf, NGMKLClassifier):
        curve = curve_csv(clf.curve_)
        if clf.selection_.variant != ALL:
            selection = diagnostics_csv(clf.selection_)
    return CellResult(train.name, method, rep, err, "", time.perf_counter() - start,
                      curve, selection)


# ---------------------------------------------------------------------------
# Reports


@dataclass(frozen=True)
class ReportRow:
    dataset: str
    method: str
    errors: tuple
    reasons: tuple = ()
    wall_time: float = 0.0

    def __post_init__(self):
        for e in self.errors:
            if not 0.0 <= e <= 100.0:
                raise ValueError(f"error {e} outside [0, 100]")

    @property
    def reps(self):
        return len(self.errors)

    @property
    def mean(self):
        return float(np.mean(self.errors)) if self.errors else math.nan

    @property
    def std(self):
        """Population standard deviation over repetitions."""
        return float(np.std(self.errors)) if self.errors else math.nan


@dataclass(frozen=True)
class ExperimentReport:
    rows: tuple = ()
    cells: tuple = ()

    @property
    def all_failed(self):
        return bool(self.cells) and not any(c.ok for c in self.cells)

    def row(self, dataset, method):
        for r in self.rows:
            if r.dataset == dataset and r.method == method:
                return r
        raise KeyError((dataset, method))


def _workers():
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        return max(1, int(raw))
    return os.cpu_count() or 1


def _cell_inputs(config):
    manifest = load_manifest(config.manifest)
    names = config.datasets or tuple(manifest.names())
    jobs = []
    for name in names:
        entry = manifest[name]
        data = entry.load()
        plan = entry.plan(config.repetitions, config.base_seed)
        for method in config.methods:
            for rep in range(plan.repetitions):
                train, test = make_split(data, plan, rep)
                jobs.append((method, train, test, config, rep, config.base_seed + rep))
    return names, jobs


def run_experiment(config, workers=None):
    """Run every (dataset, method, repetition) cell and aggregate per row.

    Cells may run in a process pool (``NGMKL_WORKERS``, default all cores);
    results are gathered in grid order, so the report does not depend on
    scheduling.
    """
    names, jobs = _cell_inputs(config)
    workers = _workers() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            cells = list(pool.map(_run_cell, jobs))
    else:
        cells = [_run_cell(job) for job in jobs]
    rows = []
    for name in names:
        for method in config.methods:
            mine = [c for c in cells if c.dataset == name and c.method == method]
            rows.append(ReportRow(
                name, method,
                tuple(c.error for c in mine if c.ok),
                tuple(f"rep {c.rep}: {c.reason}" for c in mine if not c.ok),
                sum(c.seconds for c in mine),
            ))
            log.info("%s/%s: %d reps in %.1fs", name, method, rows[-1].reps, rows[-1].wall_time)
    report = ExperimentReport(tuple(rows), tuple(cells))
    if config.output is not None:
        write_outputs(report, config.output)
    return report


def format_cell(value):
    """Two decimals, round half to even on the shortest decimal repr."""
    return str(Decimal(repr(float(value))).quantize(Decimal("0.01"), rounding=ROUND_HALF_EVEN))


CSV_HEADER = ["dataset", "method", "mean_error", "std_error", "reps", "failed", "errors", "reasons"]


def render_csv(report):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in report.rows:
        ok = bool(r.errors)
        writer.writerow([
            r.dataset, r.method,
            repr(r.mean) if ok else "", repr(r.std) if ok else "",
            r.reps, len(r.reasons),
            ";".join(repr(e) for e in r.errors),
            " | ".join(r.reasons),
        ])
    return buf.getvalue()


def render_markdown(report):
    datasets = list(dict.fromkeys(r.dataset for r in report.rows))
    methods = list(dict.fromkeys(r.method for r in report.rows))
    lines = ["| dataset | " + " | ".join(methods) + " |",
             "|---|" + "---|" * len(methods)]
    for d in datasets:
        cells = []
        for m in methods:
            try:
                r = report.row(d, m)
            except KeyError:
                cells.append("")
                continue
            cells.append(f"{format_cell(r.mean)}±{format_cell(r.std)}" if r.errors else "failed")
        lines.append(f"| {d} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def render_report(report, fmt="csv"):
    if fmt == "csv":
        return render_csv(report)
    if fmt == "markdown":
        return render_markdown(report)
    raise ValueError(f"unknown format {fmt!r}; expected 'csv' or 'markdown'")


def write_outputs(report, folder):
    """Report files plus per-cell training curves and selection diagnostics."""
    folder = Path(folder)
    folder.mkdir(parents=True, exist_ok=True)
    (folder / "report.csv").write_text(render_csv(report))
    (folder / "report.md").write_text(render_markdown(report))
    for c in report.cells:
        stem = f"{c.dataset}_{c.method}_rep{c.rep}"
        if c.curve:
            (folder / "curves").mkdir(exist_ok=True)
            (folder / "curves" / f"{stem}.csv").write_text(c.curve)
        if c.selection:
            (folder / "selection").mkdir(exist_ok=True)
            (folder / "selection" / f"{stem}.csv").write_text(c.selection)


def with_overrides(config, **overrides):
    """Copy of ``config`` with the non-None overrides applied."""
    return replace(config, **{k: v for k, v in overrides.items() if v is not None})
