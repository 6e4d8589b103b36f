"""Synthetic data, missingness injection and imputation benchmarks.

Report CSV columns::

    dataset,method,pct_subjects,pct_cells,seed,masked_cells,errors,error_rate

``errors`` is left empty when a method failed on that grid point. The
Wilcoxon CSV has one row per baseline method and one ``pct_<level>`` column
per subject-missingness level, holding the two-sided p-value of the DBN
method's error counts against that baseline (``nan`` when undefined).
"""
from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import rng as rng_mod
from .errors import DatasetError, DbnImputeError
from .imputation import METHODS, count_errors, impute
from .learning import LearnConfig, random_dbn
from .model import MISSING, Dataset, Dbn, family_config
from .stats import wilcoxon_signed_rank

log = logging.getLogger(__name__)

REPORT_COLUMNS = [
    "dataset", "method", "pct_subjects", "pct_cells", "seed",
    "masked_cells", "errors", "error_rate",
]
DEFAULT_LEVELS = (0.1, 0.2, 0.3, 0.4)


def sample_dataset(dbn: Dbn, num_subjects: int, num_slices: int, seed: int) -> Dataset:
    """Ancestral sampling: slice 0 from the prior network, later slices from
    the transition network, each in topological order."""
    if num_slices < 2:
        raise ValueError("num_slices must be >= 2")
    gen = rng_mod.stream(seed, "sampling")
    cards = dbn.cardinalities
    data = np.zeros((num_subjects, num_slices, dbn.n), dtype=np.intp)
    for t in range(num_slices):
        if t == 0:
            order, cpts, prev = dbn.structure.prior_order(), dbn.prior_cpts, None
        else:
            order, cpts = dbn.structure.transition_order(), dbn.transition_cpts
            prev = data[:, t - 1]
        for i in order:
            cpt = cpts[i]
            cfg = family_config(cards, cpt.parents, data[:, t], prev)
            cum = np.cumsum(cpt.table[cfg], axis=1)
            u = gen.random(num_subjects)
            data[:, t, i] = np.minimum((u[:, None] >= cum).sum(axis=1), cards[i] - 1)
    return Dataset(dbn.attributes, data)


@dataclass(frozen=True)
class MissingnessSpec:
    pct_subjects: float
    pct_cells: float
    seed: int = 0

    def __post_init__(self):
        for name in ("pct_subjects", "pct_cells"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


def ceil_count(fraction: float, total: int) -> int:
    """``ceil(fraction * total)``, immune to float noise such as 0.3 * 10."""
    return min(total, max(0, math.ceil(round(fraction * total, 9))))


def inject_missing(dataset: Dataset, spec: MissingnessSpec) -> tuple[Dataset, np.ndarray]:
    """MCAR masking: ``ceil(pct_subjects N)`` subjects, then
    ``ceil(pct_cells (T+1) n)`` cells within each, all uniformly without
    replacement. Returns the masked dataset and the boolean mask."""
    if dataset.has_missing:
        raise DatasetError("inject_missing needs a complete dataset")
    gen = rng_mod.stream(spec.seed, "missing")
    N, S, n = dataset.data.shape
    k_subjects = ceil_count(spec.pct_subjects, N)
    k_cells = ceil_count(spec.pct_cells, S * n)
    mask = np.zeros(dataset.data.shape, dtype=bool)
    subjects = np.sort(gen.choice(N, size=k_subjects, replace=False))
    for s in subjects:
        cells = gen.choice(S * n, size=k_cells, replace=False)
        mask[s].reshape(-1)[cells] = True
    if k_subjects and k_cells == S * n:
        log.warning("inject_missing: every cell of %d subject(s) is masked", k_subjects)
    data = np.where(mask, MISSING, dataset.data)
    return dataset.with_data(data), mask


# -- benchmark ------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    """Random-DBN data source; each seed draws a fresh DBN and dataset."""

    n_vars: int = 5
    cardinality: int = 2
    num_subjects: int = 100
    num_slices: int = 11
    max_inter_parents: int = 1
    name: str | None = None

    @property
    def label(self) -> str:
        return self.name or (
            f"synthetic_n{self.n_vars}_r{self.cardinality}_N{self.num_subjects}"
            f"_T{self.num_slices - 1}"
        )

    def generate(self, seed: int) -> Dataset:
        dbn = random_dbn(self.n_vars, self.cardinality, self.max_inter_parents, seed)
        return sample_dataset(dbn, self.num_subjects, self.num_slices, seed)


@dataclass
class BenchConfig:
    synthetic: Sequence[SyntheticSpec] = ()
    datasets: Sequence[tuple[str, Dataset]] = ()
    pct_subjects: Sequence[float] = DEFAULT_LEVELS
    pct_cells: Sequence[float] = DEFAULT_LEVELS
    methods: Sequence[str] = METHODS
    seeds: Sequence[int] = tuple(range(1, 11))
    learn: LearnConfig = field(default_factory=LearnConfig)
    threads: int = 1

    def __post_init__(self):
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")
        for ds in self.datasets:
            if ds[1].has_missing:
                raise DatasetError(f"benchmark dataset {ds[0]!r} must be complete")


@dataclass(frozen=True)
class BenchRecord:
    dataset: str
    method: str
    pct_subjects: float
    pct_cells: float
    seed: int
    masked_cells: int
    errors: int | None

    @property
    def error_rate(self) -> float:
        if self.errors is None:
            return math.nan
        return self.errors / self.masked_cells if self.masked_cells else 0.0


@dataclass
class BenchReport:
    records: list[BenchRecord]
    pct_levels: list[float]
    wilcoxon: dict[str, dict[float, float]]

    def mean_errors(self, dataset: str | None = None) -> dict[tuple, float]:
        """Mean error count per ``(method, pct_subjects, pct_cells)`` over seeds."""
        groups = defaultdict(list)
        for r in self.records:
            if r.errors is not None and (dataset is None or r.dataset == dataset):
                groups[(r.method, r.pct_subjects, r.pct_cells)].append(r.errors)
        return {k: float(np.mean(v)) for k, v in sorted(groups.items())}


def _run_point(args):
    source, name, seed, ps, pc, methods, learn = args
    original = source.generate(seed) if isinstance(source, SyntheticSpec) else source
    masked, mask = inject_missing(original, MissingnessSpec(ps, pc, seed))
    masked_cells = int(mask.sum())
    out = []
    for method in methods:
        try:
            result = impute(masked, method, replace(learn, seed=seed))
            errors = count_errors(original, result.dataset, mask)
        except DbnImputeError as exc:
            log.error("%s/%s ps=%s pc=%s seed=%s failed: %s", name, method, ps, pc, seed, exc)
            errors = None
        out.append(BenchRecord(name, method, ps, pc, seed, masked_cells, errors))
    return out


def _level_key(level: float) -> str:
    return f"pct_{int(round(level * 100))}"


def wilcoxon_table(records: Sequence[BenchRecord], reference: str = "dbn") -> dict:
    """p-values of ``reference`` against every other method, per pct_subjects level."""
    by_key = {(r.dataset, r.method, r.pct_subjects, r.pct_cells, r.seed): r.errors
              for r in records}
    levels = sorted({r.pct_subjects for r in records})
    methods = [m for m in dict.fromkeys(r.method for r in records) if m != reference]
    table = {}
    for m in methods:
        table[m] = {}
        for level in levels:
            pairs = []
            for (ds, meth, ps, pc, seed), err in by_key.items():
                if meth != reference or ps != level or err is None:
                    continue
                other = by_key.get((ds, m, ps, pc, seed))
                if other is not None:
                    pairs.append((err, other))
            try:
                table[m][level] = wilcoxon_signed_rank(pairs).p_value
            except ValueError:
                table[m][level] = math.nan
    return table


def run_benchmark(config: BenchConfig) -> BenchReport:
    """Run every (data source, seed, pct_subjects, pct_cells) point with every method."""
    sources = [(s, s.label) for s in config.synthetic] + [(d, name) for name, d in config.datasets]
    tasks = [
        (source, name, seed, ps, pc, tuple(config.methods), config.learn)
        for source, name in sources
        for seed in config.seeds
        for ps in config.pct_subjects
        for pc in config.pct_cells
    ]
    if config.threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            chunks = list(pool.map(_run_point, tasks))
    else:
        chunks = [_run_point(t) for t in tasks]
    records = [r for chunk in chunks for r in chunk]
    wil = wilcoxon_table(records) if "dbn" in config.methods else {}
    return BenchReport(records, sorted(set(config.pct_subjects)), wil)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_report_csv(report: BenchReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in report.records:
            w.writerow([
                r.dataset, r.method, _fmt(r.pct_subjects), _fmt(r.pct_cells), r.seed,
                r.masked_cells, "" if r.errors is None else r.errors, _fmt(r.error_rate),
            ])


def read_report_csv(path) -> list[BenchRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != REPORT_COLUMNS:
            raise DatasetError(f"report header {header} does not match {REPORT_COLUMNS}")
        records = []
        for row in reader:
            if not row:
                continue
            ds, method, ps, pc, seed, masked, errors, rate = row
            rec = BenchRecord(ds, method, float(ps), float(pc), int(seed), int(masked),
                              int(errors) if errors else None)
            if errors and rec.error_rate != float(rate):
                raise DatasetError(f"inconsistent error_rate in row {row}")
            records.append(rec)
    return records


def write_wilcoxon_csv(report: BenchReport, path) -> None:
    levels = report.pct_levels
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method"] + [_level_key(x) for x in levels])
        for method, row in report.wilcoxon.items():
            w.writerow([method] + [_fmt(row.get(x, math.nan)) for x in levels])


def write_bench_outputs(report: BenchReport, out_dir, figures: bool = True) -> dict[str, Path]:
    """Write report.csv, wilcoxon.csv and (optionally) the PNG figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"report": out / "report.csv", "wilcoxon": out / "wilcoxon.csv"}
    write_report_csv(report, paths["report"])
    write_wilcoxon_csv(report, paths["wilcoxon"])
    if figures:
        from .plotting import plot_error_grid, plot_wilcoxon

        paths["errors_figure"] = out / "errors.png"
        plot_error_grid(report, paths["errors_figure"])
        if report.wilcoxon:
            paths["wilcoxon_figure"] = out / "wilcoxon.png"
            plot_wilcoxon(report, paths["wilcoxon_figure"])
    return paths
