"""Missing-value imputation: DBN posterior maximisation and baselines."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import DatasetError
from .inference import LogFactors, TransitionWindow, window_posterior
from .learning import (
    EmResult,
    LearnConfig,
    SemResult,
    expectation_maximization,
    learn_dbn,
    random_parameters,
)
from .model import MISSING, Dataset, Dbn, DbnStructure
from . import rng as rng_mod

log = logging.getLogger(__name__)

METHODS = ("dbn", "locf", "mode", "em")


@dataclass
class ImputationResult:
    """A completed dataset plus which cells were filled and how."""

    dataset: Dataset
    method: str
    imputed: np.ndarray
    diagnostics: dict[str, Any] = field(default_factory=dict)
    model: Dbn | None = None
    learning: SemResult | EmResult | None = None


def impute_with_model(dataset: Dataset, dbn: Dbn, cap: int = 10**6) -> tuple[np.ndarray, dict]:
    """Forward sweep: fill each window's missing cells with the posterior argmax.

    Windows are visited in increasing ``t``; cells filled at slice ``t+1`` are
    treated as observed by the next window. Posterior ties go to the
    lexicographically smallest completion.
    """
    if dbn.cardinalities != dataset.cardinalities:
        raise DatasetError("model and dataset attribute domains differ")
    data = dataset.data.astype(np.intp)
    factors = LogFactors(dbn.structure, dbn.parameters, dbn.cardinalities)
    ties = fallbacks = 0
    for s in np.flatnonzero((data == MISSING).any(axis=(1, 2))):
        for t in range(dataset.num_slices - 1):
            cells = data[s, t:t + 2]
            if not (cells == MISSING).any():
                continue
            post = window_posterior(TransitionWindow(int(s), t, cells.copy()), dbn, cap, factors)
            best = post.best()
            if (post.probabilities == post.probabilities[best]).sum() > 1:
                ties += 1
            fallbacks += post.fallback
            for (row, i), v in zip(post.positions, post.assignments[best]):
                data[s, t + row, i] = v
    return data, {"ties_broken": ties, "zero_evidence_fallbacks": fallbacks}


def impute_dbn(dataset: Dataset, config: LearnConfig = LearnConfig()) -> ImputationResult:
    """Learn a tDBN with Structural EM from a random start, then impute by posterior argmax."""
    missing = dataset.missing_mask
    sem = learn_dbn(dataset, config)
    data, diag = impute_with_model(dataset, sem.dbn, config.enumeration_cap)
    diag["sem_iterations"] = len(sem.trace)
    return ImputationResult(dataset.with_data(data), "dbn", missing, diag, sem.dbn, sem)


def impute_param_em(dataset: Dataset, config: LearnConfig = LearnConfig(),
                    structure: DbnStructure | None = None) -> ImputationResult:
    """Parameter EM on a fixed structure, then posterior-argmax imputation.

    The default structure links each attribute only to itself in the
    previous slice.
    """
    missing = dataset.missing_mask
    n = dataset.num_attributes
    structure = structure or DbnStructure.self_transitions(n)
    init = random_parameters(structure, dataset.cardinalities, rng_mod.stream(config.seed, "init"))
    em = expectation_maximization(structure, init, dataset, config)
    dbn = Dbn(dataset.attributes, structure, em.parameters)
    data, diag = impute_with_model(dataset, dbn, config.enumeration_cap)
    diag["em_iterations"] = em.iterations
    return ImputationResult(dataset.with_data(data), "em", missing, diag, dbn, em)


def impute_locf(dataset: Dataset) -> ImputationResult:
    """Last observation carried forward, per subject and attribute.

    Leading gaps take the first later observation; a column with no
    observation at all takes value index 0.
    """
    data = dataset.data.astype(np.intp)
    missing = data == MISSING
    cols = np.moveaxis(data, 1, 2)  # (N, n, S)
    valid = cols != MISSING
    S = cols.shape[-1]
    idx = np.where(valid, np.arange(S), -1)
    last = np.maximum.accumulate(idx, axis=-1)
    first = np.argmax(valid, axis=-1)[..., None]
    src = np.where(last >= 0, last, first)
    filled = np.take_along_axis(cols, src, axis=-1)
    empty = ~valid.any(axis=-1)
    filled[empty] = 0
    out = np.moveaxis(filled, 2, 1)
    diag = {"empty_columns": int(empty.sum())}
    if empty.any():
        log.warning("LOCF: %d subject/attribute column(s) fully missing; filled with index 0",
                    int(empty.sum()))
    return ImputationResult(dataset.with_data(out), "locf", missing, diag)


def impute_mode(dataset: Dataset) -> ImputationResult:
    """Fill every gap with the attribute's most frequent observed value (lowest index on ties)."""
    data = dataset.data.astype(np.intp)
    missing = data == MISSING
    modes, empty = [], []
    for i, r in enumerate(dataset.cardinalities):
        obs = data[..., i][~missing[..., i]]
        counts = np.bincount(obs, minlength=r)
        if counts.sum() == 0:
            empty.append(dataset.attributes[i].name)
        modes.append(int(np.argmax(counts)))
    out = np.where(missing, np.array(modes), data)
    if empty:
        log.warning("mode: no observed values for %s; filled with index 0", empty)
    diag = {"modes": modes, "unobserved_attributes": empty}
    return ImputationResult(dataset.with_data(out), "mode", missing, diag)


def impute(dataset: Dataset, method: str, config: LearnConfig = LearnConfig()) -> ImputationResult:
    if method == "dbn":
        return impute_dbn(dataset, config)
    if method == "em":
        return impute_param_em(dataset, config)
    if method == "locf":
        return impute_locf(dataset)
    if method == "mode":
        return impute_mode(dataset)
    raise ValueError(f"unknown imputation method {method!r}; choose from {METHODS}")


def count_errors(original: Dataset, imputed: Dataset, mask: np.ndarray) -> int:
    """Number of masked cells where the imputed value differs from the original."""
    mask = np.asarray(mask, dtype=bool)
    if original.data.shape != imputed.data.shape or mask.shape != original.data.shape:
        raise DatasetError(
            f"shape mismatch: original {original.data.shape}, imputed "
            f"{imputed.data.shape}, mask {mask.shape}"
        )
    if (original.data[mask] == MISSING).any() or (imputed.data[mask] == MISSING).any():
        raise DatasetError("masked cells must be present in both datasets")
    return int((original.data[mask] != imputed.data[mask]).sum())
