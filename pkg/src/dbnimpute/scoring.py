"""Sufficient statistics and decomposable scores (log-likelihood, MDL).

Log-likelihood terms use natural logarithms. The MDL penalty is
``log_b(N) / 2`` per free parameter with ``b = 2`` by default; pass
``log_base=math.e`` to compare against tools that penalise in nats.

Prior families are scored with ``N = number of subjects``; transition families
with ``N = number of pooled transitions`` (subjects times ``T``).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import DatasetError
from .model import MISSING, Dataset, DbnParameters, DbnStructure, Parent, family_config

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class CountTable:
    """``counts[j, k]``: (expected) number of instances with parents = j, child = k."""

    variable: int
    parents: tuple[Parent, ...]
    counts: np.ndarray

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    @property
    def num_parameters(self) -> int:
        q, r = self.counts.shape
        return q * (r - 1)


@dataclass(frozen=True)
class DbnCounts:
    """Count tables for every prior and transition family of a structure."""

    prior: tuple[CountTable, ...]
    transition: tuple[CountTable, ...]
    num_subjects: int
    num_transitions: int


def family_counts(dataset: Dataset, child: int, parents, prior: bool) -> CountTable:
    """Hard counts of one family over a complete dataset.

    Prior families tally slice 0 of every subject; transition families pool
    every transition ``t -> t+1`` of every subject.
    """
    data = dataset.data
    if prior:
        cur, prev = data[:, 0, :], None
    else:
        n = dataset.num_attributes
        cur = data[:, 1:, :].reshape(-1, n)
        prev = data[:, :-1, :].reshape(-1, n)
    cards = dataset.cardinalities
    q = math.prod(cards[j] for _, j in parents)
    r = cards[child]
    cfg = family_config(cards, parents, cur, prev)
    flat = cfg * r + cur[:, child]
    counts = np.bincount(flat.astype(np.intp), minlength=q * r).astype(np.float64)
    return CountTable(child, tuple(parents), counts.reshape(q, r))


def collect_counts(dataset: Dataset, structure: DbnStructure) -> DbnCounts:
    """Sufficient statistics of a complete dataset under ``structure``."""
    if dataset.has_missing:
        s, t, i = map(int, np.argwhere(dataset.data == MISSING)[0])
        raise DatasetError(
            f"collect_counts needs complete data; subject {dataset.subject_ids[s]!r} "
            f"slice {t} attribute {dataset.attributes[i].name!r} is missing"
        )
    if structure.n != dataset.num_attributes:
        raise DatasetError("structure and dataset disagree on the number of attributes")
    n = structure.n
    return DbnCounts(
        prior=tuple(family_counts(dataset, i, structure.prior_parents(i), True) for i in range(n)),
        transition=tuple(
            family_counts(dataset, i, structure.transition_parents(i), False) for i in range(n)
        ),
        num_subjects=dataset.num_subjects,
        num_transitions=dataset.num_subjects * (dataset.num_slices - 1),
    )


def mle_table(counts: np.ndarray, alpha: float = 0.0) -> np.ndarray:
    """Row-normalised ``(counts + alpha) / (row_total + alpha * r)``.

    Rows with no mass (possible only when ``alpha == 0``) become uniform.
    """
    counts = np.asarray(counts, dtype=np.float64)
    r = counts.shape[1]
    num = counts + alpha
    den = num.sum(axis=1, keepdims=True)
    out = np.full_like(num, 1.0 / r)
    np.divide(num, den, out=out, where=den > 0)
    return out


def _xlogy(x, y):
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(x > 0, x * np.log(y), 0.0)
    return float(terms.sum())


def table_log_likelihood(counts: np.ndarray, table: np.ndarray) -> float:
    """``sum counts * log(table)`` with ``0 * log 0 = 0``; ``-inf`` if a counted cell has θ = 0."""
    return _xlogy(counts, table)


def log_likelihood(counts: DbnCounts, parameters: DbnParameters) -> float:
    """Log-likelihood of the (expected) counts under ``parameters``."""
    total = 0.0
    pairs = list(zip(counts.prior, parameters.prior)) + list(
        zip(counts.transition, parameters.transition)
    )
    for ct, cpt in pairs:
        if ct.variable != cpt.variable or ct.parents != cpt.parents:
            raise ValueError(
                f"count table for variable {ct.variable} {ct.parents} does not match "
                f"CPT for variable {cpt.variable} {cpt.parents}"
            )
        ll = table_log_likelihood(ct.counts, cpt.table)
        if ll == -math.inf:
            log.warning(
                "zero probability for observed counts of variable %d (parents %s)",
                ct.variable, ct.parents,
            )
        total += ll
    return total


def penalty(num_parameters: int, num_instances: int, log_base: float = 2.0) -> float:
    return math.log(num_instances, log_base) / 2.0 * num_parameters


def local_score(
    table: CountTable, num_instances: int, *, log_base: float = 2.0, alpha: float = 0.0
) -> float:
    """MDL score of a single family.

    With ``alpha == 0`` this is the maximised log-likelihood minus
    ``log_b(N)/2 * q (r - 1)``. With ``alpha > 0`` the likelihood term is the
    maximum of ``sum (counts + alpha) log θ``, i.e. it also carries the
    Dirichlet smoothing used by the M-step, which keeps Structural EM
    monotone under smoothed parameter estimates.
    """
    if num_instances <= 0:
        raise ValueError("num_instances must be positive")
    smoothed = table.counts + alpha
    ll = _xlogy(smoothed, mle_table(table.counts, alpha))
    return ll - penalty(table.num_parameters, num_instances, log_base)


def mdl_score(
    tables: Iterable[CountTable], num_instances: int, *, log_base: float = 2.0,
    alpha: float = 0.0,
) -> float:
    """Sum of :func:`local_score` over families sharing one sample size."""
    return sum(local_score(t, num_instances, log_base=log_base, alpha=alpha) for t in tables)


def dbn_mdl_score(counts: DbnCounts, *, log_base: float = 2.0, alpha: float = 0.0) -> float:
    """MDL score of prior plus transition families, each with its own sample size."""
    score = 0.0
    if counts.prior:
        score += mdl_score(counts.prior, counts.num_subjects, log_base=log_base, alpha=alpha)
    if counts.transition:
        score += mdl_score(
            counts.transition, counts.num_transitions, log_base=log_base, alpha=alpha
        )
    return score


def structure_penalty(
    structure: DbnStructure, cards, num_subjects: int, num_transitions: int,
    log_base: float = 2.0,
) -> float:
    """Total MDL penalty of a structure (prior and transition families)."""
    total = 0.0
    for i in range(structure.n):
        for parents, n_inst in (
            (structure.prior_parents(i), num_subjects),
            (structure.transition_parents(i), num_transitions),
        ):
            q = math.prod(cards[j] for _, j in parents)
            total += penalty(q * (cards[i] - 1), n_inst, log_base)
    return total
