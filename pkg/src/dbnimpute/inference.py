"""Exact window posteriors and expected sufficient statistics.

Inference runs per two-slice window ``{t, t+1}``. A window's unnormalised
weight for a completion of its missing cells is the product of

* the prior factors of slice-0 cells, when ``t == 0``;
* the transition factors of the slice-``t+1`` cells.

Slice-``t`` cells of a later window carry no factor of their own (their
evidence was used by the window in which they were the child slice), so a
missing slice-``t`` cell there is summed over uniformly. Every window is an
independent instance: transition families collect one unit of mass per
window and prior families one unit per subject (from the ``t == 0`` window).
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import EnumerationCapError
from .model import MISSING, Dataset, Dbn, DbnParameters, DbnStructure, family_config
from .scoring import CountTable, DbnCounts

log = logging.getLogger(__name__)

DEFAULT_ENUMERATION_CAP = 10**6

EssTable = CountTable


@dataclass(frozen=True)
class TransitionWindow:
    """Cells of slices ``t`` (row 0) and ``t+1`` (row 1) of one subject."""

    subject: int
    t: int
    cells: np.ndarray

    @classmethod
    def from_dataset(cls, dataset: Dataset, subject: int, t: int) -> "TransitionWindow":
        return cls(subject, t, np.array(dataset.data[subject, t:t + 2], dtype=np.intp))

    @property
    def missing_positions(self) -> list[tuple[int, int]]:
        """``(row, attribute)`` of every missing cell, row-major."""
        return [(int(a), int(b)) for a, b in np.argwhere(self.cells == MISSING)]


@dataclass(frozen=True)
class WindowPosterior:
    positions: tuple[tuple[int, int], ...]
    assignments: np.ndarray  # (K, len(positions)), lexicographic order
    probabilities: np.ndarray  # (K,)
    log_evidence: float
    fallback: bool

    def best(self) -> int:
        """Index of the most probable completion; ties go to the first (smallest)."""
        return int(np.argmax(self.probabilities))


class LogFactors:
    """Log CPT lookups for a structure and its parameters."""

    def __init__(self, structure: DbnStructure, parameters: DbnParameters, cards):
        self.cards = tuple(cards)
        with np.errstate(divide="ignore"):
            self.prior = [(c.variable, c.parents, np.log(c.table)) for c in parameters.prior]
            self.transition = [
                (c.variable, c.parents, np.log(c.table)) for c in parameters.transition
            ]

    def transition_weight(self, prev: np.ndarray, cur: np.ndarray) -> np.ndarray:
        lw = np.zeros(cur.shape[0])
        for i, parents, logt in self.transition:
            lw += logt[family_config(self.cards, parents, cur, prev), cur[:, i]]
        return lw

    def prior_weight(self, first: np.ndarray) -> np.ndarray:
        lw = np.zeros(first.shape[0])
        for i, parents, logt in self.prior:
            lw += logt[family_config(self.cards, parents, first), first[:, i]]
        return lw


def _completions(cards_at_positions) -> np.ndarray:
    ranges = [range(c) for c in cards_at_positions]
    size = math.prod(int(c) for c in cards_at_positions)
    out = np.array(list(itertools.product(*ranges)), dtype=np.intp)
    return out.reshape(size, len(cards_at_positions))


def window_posterior(
    window: TransitionWindow, dbn: Dbn, cap: int = DEFAULT_ENUMERATION_CAP,
    factors: LogFactors | None = None,
) -> WindowPosterior:
    """Posterior over joint completions of the window's missing cells."""
    cards = dbn.cardinalities
    n = dbn.n
    cells = np.asarray(window.cells, dtype=np.intp)
    if cells.shape != (2, n):
        raise ValueError(f"window cells must have shape (2, {n}), got {cells.shape}")
    positions = tuple(window.missing_positions)
    size = math.prod(cards[i] for _, i in positions)
    if size > cap:
        raise EnumerationCapError(
            f"window (subject {window.subject}, t={window.t}) has {size} completions, "
            f"above the enumeration cap {cap}; reduce missingness or cardinality",
            window.subject, window.t, size,
        )
    assignments = _completions([cards[i] for _, i in positions])
    rows = np.repeat(cells.reshape(1, 2 * n), len(assignments), axis=0)
    flat = [row * n + i for row, i in positions]
    rows[:, flat] = assignments
    prev, cur = rows[:, :n], rows[:, n:]
    factors = factors or LogFactors(dbn.structure, dbn.parameters, cards)
    lw = factors.transition_weight(prev, cur)
    if window.t == 0:
        lw = lw + factors.prior_weight(prev)
    mx = lw.max()
    if mx == -math.inf:
        log.warning(
            "zero-probability evidence in window (subject %s, t=%s); using uniform",
            window.subject, window.t,
        )
        probs = np.full(len(lw), 1.0 / len(lw))
        return WindowPosterior(positions, assignments, probs, -math.inf, True)
    w = np.exp(lw - mx)
    z = w.sum()
    return WindowPosterior(positions, assignments, w / z, float(mx + math.log(z)), False)


@dataclass
class BatchPosterior:
    weights: np.ndarray  # posterior weight of every expanded row
    log_evidence: float  # sum of per-window log normalisers
    fallbacks: int


class WindowBatch:
    """Every window of a dataset with its missing cells expanded into completions.

    Rows are grouped per window in (subject, t) order and, within a window,
    completions are in lexicographic order. The expansion depends only on
    the data, so it is built once and reused across E-steps.
    """

    def __init__(self, dataset: Dataset, cap: int = DEFAULT_ENUMERATION_CAP):
        self.dataset = dataset
        self.cards = dataset.cardinalities
        n = dataset.num_attributes
        N, S = dataset.num_subjects, dataset.num_slices
        self.num_subjects = N
        self.num_windows = N * (S - 1)
        data = dataset.data.astype(np.intp)
        vals = np.concatenate([data[:, :-1, :], data[:, 1:, :]], axis=2).reshape(-1, 2 * n)
        win_subject = np.repeat(np.arange(N), S - 1)
        win_t = np.tile(np.arange(S - 1), N)
        missing = vals == MISSING
        if len(vals):
            patterns, inverse = np.unique(missing, axis=0, return_inverse=True)
            inverse = inverse.reshape(-1)
        else:
            patterns, inverse = np.zeros((0, 2 * n), bool), np.zeros(0, np.intp)
        blocks, owners = [], []
        card2 = np.array(self.cards * 2)
        for p, pattern in enumerate(patterns):
            members = np.flatnonzero(inverse == p)
            pos = np.flatnonzero(pattern)
            size = math.prod(int(c) for c in card2[pos])
            if size > cap:
                w = members[0]
                raise EnumerationCapError(
                    f"window (subject {dataset.subject_ids[win_subject[w]]}, "
                    f"t={win_t[w]}) has {size} completions, above the enumeration "
                    f"cap {cap}; reduce missingness or cardinality",
                    int(win_subject[w]), int(win_t[w]), size,
                )
            comp = _completions(card2[pos])
            block = np.repeat(vals[members], len(comp), axis=0)
            if len(pos):
                block[:, pos] = np.tile(comp, (len(members), 1))
            blocks.append(block)
            owners.append(np.repeat(members, len(comp)))
        if blocks:
            rows = np.concatenate(blocks)
            owner = np.concatenate(owners)
            order = np.argsort(owner, kind="stable")
            rows, owner = rows[order], owner[order]
        else:
            rows = np.zeros((0, 2 * n), dtype=np.intp)
            owner = np.zeros(0, dtype=np.intp)
        self.prev = rows[:, :n]
        self.cur = rows[:, n:]
        self.row_window = owner
        self.starts = np.searchsorted(owner, np.arange(self.num_windows))
        self.first_rows = np.flatnonzero(win_t[owner] == 0)
        self.num_rows = len(rows)

    def posterior(self, structure: DbnStructure, parameters: DbnParameters) -> BatchPosterior:
        if self.num_windows == 0:
            return BatchPosterior(np.zeros(0), 0.0, 0)
        factors = LogFactors(structure, parameters, self.cards)
        lw = factors.transition_weight(self.prev, self.cur)
        lw[self.first_rows] += factors.prior_weight(self.prev[self.first_rows])
        mx = np.maximum.reduceat(lw, self.starts)
        dead = mx == -np.inf
        shift = np.where(dead, 0.0, mx)[self.row_window]
        with np.errstate(invalid="ignore"):
            w = np.exp(lw - shift)
        if dead.any():
            w[dead[self.row_window]] = 1.0
            log.warning("%d window(s) with zero-probability evidence; using uniform",
                        int(dead.sum()))
        z = np.add.reduceat(w, self.starts)
        weights = w / z[self.row_window]
        if dead.any():
            log_ev = -math.inf
        else:
            log_ev = float(np.sum(mx + np.log(z)))
        return BatchPosterior(weights, log_ev, int(dead.sum()))

    def family_counts(self, weights: np.ndarray, child: int, parents, prior: bool) -> CountTable:
        cards = self.cards
        q = math.prod(cards[j] for _, j in parents)
        r = cards[child]
        if prior:
            rows = self.first_rows
            cur, prev, w = self.prev[rows], None, weights[rows]
        else:
            cur, prev, w = self.cur, self.prev, weights
        flat = family_config(cards, parents, cur, prev) * r + cur[:, child]
        counts = np.bincount(flat, weights=w, minlength=q * r)
        return CountTable(child, tuple(parents), counts.reshape(q, r))

    def ess(self, structure: DbnStructure, weights: np.ndarray) -> DbnCounts:
        n = structure.n
        return DbnCounts(
            prior=tuple(
                self.family_counts(weights, i, structure.prior_parents(i), True)
                for i in range(n)
            ),
            transition=tuple(
                self.family_counts(weights, i, structure.transition_parents(i), False)
                for i in range(n)
            ),
            num_subjects=self.num_subjects,
            num_transitions=self.num_windows,
        )


def compute_ess(
    structure: DbnStructure, parameters: DbnParameters, dataset: Dataset,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> DbnCounts:
    """Expected sufficient statistics of every family of ``structure``."""
    batch = WindowBatch(dataset, cap)
    post = batch.posterior(structure, parameters)
    return batch.ess(structure, post.weights)
