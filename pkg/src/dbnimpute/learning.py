"""tDBN structure learning, parameter EM and Structural EM.

Objective
---------
EM and Structural EM track the window-composite observed-data
log-likelihood (see :mod:`dbnimpute.inference`) plus the smoothing term
``alpha * sum(log theta)`` that the smoothed M-step maximises. With
``alpha == 0`` this is exactly the log-likelihood. The Structural EM score
is that objective minus the MDL penalty of the structure, so with
``alpha == 0`` it is the standard MDL score, and in every case it is the
quantity that each SEM iteration cannot decrease.
"""
from __future__ import annotations

import heapq
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import rng as rng_mod
from .branching import maximum_branching
from .errors import DatasetError
from .inference import DEFAULT_ENUMERATION_CAP, BatchPosterior, WindowBatch
from .model import (
    AttributeSpec,
    Cpt,
    Dataset,
    Dbn,
    DbnParameters,
    DbnStructure,
    validate_parameters,
)
from .scoring import (
    CountTable,
    DbnCounts,
    collect_counts,
    family_counts,
    local_score,
    log_likelihood,
    mle_table,
    structure_penalty,
)

log = logging.getLogger(__name__)

CountsProvider = Callable[[int, tuple, bool], CountTable]


@dataclass(frozen=True)
class LearnConfig:
    max_inter_parents: int = 1
    em_max_iters: int = 100
    em_rel_tol: float = 1e-4
    sem_max_iters: int = 20
    smoothing_alpha: float = 1.0
    seed: int = 0
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP
    penalty_log_base: float = 2.0
    init_structure: str = "random"
    parameter_em: bool = True

    def __post_init__(self):
        if self.max_inter_parents < 0:
            raise ValueError("max_inter_parents must be >= 0")
        if self.em_max_iters < 1 or self.sem_max_iters < 1:
            raise ValueError("iteration limits must be >= 1")
        if self.em_rel_tol < 0 or self.smoothing_alpha < 0:
            raise ValueError("em_rel_tol and smoothing_alpha must be >= 0")
        if self.enumeration_cap < 1:
            raise ValueError("enumeration_cap must be >= 1")
        if self.penalty_log_base <= 1:
            raise ValueError("penalty_log_base must be > 1")
        if self.init_structure not in ("random", "empty"):
            raise ValueError("init_structure must be 'random' or 'empty'")


def mle_parameters(counts: DbnCounts, smoothing_alpha: float = 0.0) -> DbnParameters:
    """Smoothed maximum-likelihood CPTs ``(M[x,w] + a) / (M[w] + a r)``."""

    def fit(ct: CountTable) -> Cpt:
        return Cpt(ct.variable, ct.parents, mle_table(ct.counts, smoothing_alpha))

    return DbnParameters(
        prior=[fit(ct) for ct in counts.prior],
        transition=[fit(ct) for ct in counts.transition],
    )


# -- structure search ----------------------------------------------------------

class FamilyScorer:
    """Caches local scores of candidate families."""

    def __init__(self, counts: CountsProvider, num_subjects: int, num_transitions: int,
                 log_base: float = 2.0, alpha: float = 0.0):
        self.counts = counts
        self.num = {True: num_subjects, False: num_transitions}
        self.log_base = log_base
        self.alpha = alpha
        self._cache = {}

    def __call__(self, child: int, parents: tuple, prior: bool) -> float:
        key = (child, parents, prior)
        if key not in self._cache:
            table = self.counts(child, parents, prior)
            self._cache[key] = local_score(
                table, self.num[prior], log_base=self.log_base, alpha=self.alpha
            )
        return self._cache[key]


def inter_parent_sets(n: int, p: int) -> list[tuple[int, ...]]:
    """All subsets of ``range(n)`` with at most ``p`` elements, lexicographically sorted."""
    sets = []
    for size in range(min(p, n) + 1):
        sets.extend(itertools.combinations(range(n), size))
    return sorted(sets)


def _best_inter(score, child, intra, sets, prior):
    best, arg = -math.inf, None
    for s in sets:
        parents = tuple(sorted(intra + [(1, j) for j in s]))
        v = score(child, parents, prior)
        if v > best:
            best, arg = v, s
    return best, arg


def _search(n, score, sets, prior):
    root, root_arg = {}, {}
    for i in range(n):
        root[i], root_arg[i] = _best_inter(score, i, [], sets, prior)
    gains, gain_arg = {}, {}
    for i in range(n):
        for j in range(n):
            if j == i:
                continue
            best, arg = _best_inter(score, i, [(0, j)], sets, prior)
            gains[(j, i)] = best - root[i]
            gain_arg[(j, i)] = arg
    branching = maximum_branching(n, gains)
    intra, inter = [], []
    for i in range(n):
        if i in branching:
            j = branching[i]
            intra.append((j, i))
            inter.extend((s, i) for s in gain_arg[(j, i)])
        else:
            inter.extend((s, i) for s in root_arg[i])
    return intra, inter


def learn_structure_tdbn(
    n: int, counts: CountsProvider, config: LearnConfig, *,
    num_subjects: int, num_transitions: int,
) -> DbnStructure:
    """Highest-scoring tDBN given family counts.

    ``counts(child, parents, prior)`` returns the (expected) count table of a
    candidate family. The transition network has a forest of intra-slice
    edges (in-degree <= 1) plus at most ``max_inter_parents`` parents in the
    previous slice per node; the prior network is a forest over slice 0.
    """
    scorer = FamilyScorer(counts, num_subjects, num_transitions,
                          config.penalty_log_base, config.smoothing_alpha)
    return _learn(n, scorer, config.max_inter_parents)


def _learn(n, scorer, p):
    sets = inter_parent_sets(n, p)
    intra, inter = _search(n, scorer, sets, prior=False)
    prior_edges, _ = _search(n, scorer, [()], prior=True)
    return DbnStructure(n, prior_edges, intra, inter)


def structure_score(structure: DbnStructure, scorer: FamilyScorer) -> tuple[float, float]:
    """``(prior score, transition score)`` of ``structure`` as sums of local scores."""
    prior = sum(scorer(i, structure.prior_parents(i), True) for i in range(structure.n))
    trans = sum(scorer(i, structure.transition_parents(i), False) for i in range(structure.n))
    return prior, trans


def complete_data_counts(dataset: Dataset) -> CountsProvider:
    def provider(child, parents, prior):
        return family_counts(dataset, child, parents, prior)
    return provider


def expected_counts(batch: WindowBatch, weights: np.ndarray) -> CountsProvider:
    def provider(child, parents, prior):
        return batch.family_counts(weights, child, parents, prior)
    return provider


# -- EM -----------------------------------------------------------------------

@dataclass
class EmResult:
    parameters: DbnParameters
    trace: list[float]
    loglik_trace: list[float]
    iterations: int
    converged: bool
    posterior: BatchPosterior = field(repr=False)

    @property
    def objective(self) -> float:
        return self.trace[-1]


def expectation_maximization(
    structure: DbnStructure, init_params: DbnParameters, dataset: Dataset,
    config: LearnConfig, batch: WindowBatch | None = None,
) -> EmResult:
    """Parameter EM for a fixed structure.

    ``trace[k]`` is the objective (log-likelihood plus smoothing term) at the
    parameters after ``k`` M-steps. Stops when the relative improvement drops
    below ``em_rel_tol`` or after ``em_max_iters`` M-steps. On complete data
    a single M-step reaches the fixed point.
    """
    if structure.n != dataset.num_attributes:
        raise DatasetError("structure and dataset disagree on the number of attributes")
    validate_parameters(structure, init_params, dataset.cardinalities)
    alpha = config.smoothing_alpha
    batch = batch or WindowBatch(dataset, config.enumeration_cap)
    params = init_params
    post = batch.posterior(structure, params)
    trace = [post.log_evidence + params.log_prior_term(alpha)]
    lls = [post.log_evidence]
    complete = not dataset.has_missing
    converged = False
    it = 0
    for it in range(1, config.em_max_iters + 1):
        params = mle_parameters(batch.ess(structure, post.weights), alpha)
        post = batch.posterior(structure, params)
        obj = post.log_evidence + params.log_prior_term(alpha)
        gain = obj - trace[-1]
        trace.append(obj)
        lls.append(post.log_evidence)
        if complete or math.isnan(gain) or gain <= config.em_rel_tol * abs(obj):
            converged = True
            break
    return EmResult(params, trace, lls, it, converged, post)


# -- Structural EM --------------------------------------------------------------

@dataclass(frozen=True)
class SemStep:
    iteration: int
    log_likelihood: float
    score: float
    structure: DbnStructure
    em_iterations: int


@dataclass
class SemResult:
    dbn: Dbn
    trace: list[SemStep]
    converged: bool

    @property
    def scores(self) -> list[float]:
        return [s.score for s in self.trace]


def structural_em(
    init_structure: DbnStructure, init_params: DbnParameters, dataset: Dataset,
    config: LearnConfig,
) -> SemResult:
    """Structural EM over tDBN structures.

    Each iteration runs parameter EM under the current structure, computes
    expected counts for every candidate family under the resulting model,
    learns the best tDBN from them and re-estimates its parameters. Stops
    once the structure repeats and the score gain is below
    ``em_rel_tol * |score|``, or after ``sem_max_iters`` iterations.
    """
    n = dataset.num_attributes
    cards = dataset.cardinalities
    alpha = config.smoothing_alpha
    base = config.penalty_log_base
    num_subjects = dataset.num_subjects
    num_transitions = num_subjects * (dataset.num_slices - 1)
    if not dataset.has_missing:
        return _complete_sem(dataset, config)
    init_structure.check_tdbn(config.max_inter_parents)
    validate_parameters(init_structure, init_params, cards)

    batch = WindowBatch(dataset, config.enumeration_cap)
    structure, params = init_structure, init_params
    trace: list[SemStep] = []
    converged = False
    for it in range(config.sem_max_iters):
        if config.parameter_em:
            em = expectation_maximization(structure, params, dataset, config, batch)
            params, post, em_iters = em.parameters, em.posterior, em.iterations
        else:
            post, em_iters = batch.posterior(structure, params), 0
        objective = post.log_evidence + params.log_prior_term(alpha)
        score = objective - structure_penalty(structure, cards, num_subjects,
                                              num_transitions, base)
        trace.append(SemStep(it, post.log_evidence, score, structure, em_iters))
        log.debug("SEM iteration %d: score %.6f, %d EM iterations", it, score, em_iters)
        if it > 0 and structure == trace[-2].structure:
            if score - trace[-2].score < config.em_rel_tol * abs(score):
                converged = True
                break
        if it == config.sem_max_iters - 1:
            break
        scorer = FamilyScorer(expected_counts(batch, post.weights), num_subjects,
                              num_transitions, base, alpha)
        structure = _learn(n, scorer, config.max_inter_parents)
        params = mle_parameters(batch.ess(structure, post.weights), alpha)
    attributes = dataset.attributes
    return SemResult(Dbn(attributes, structure, params), trace, converged)


def _complete_sem(dataset: Dataset, config: LearnConfig) -> SemResult:
    n = dataset.num_attributes
    num_subjects = dataset.num_subjects
    num_transitions = num_subjects * (dataset.num_slices - 1)
    scorer = FamilyScorer(complete_data_counts(dataset), num_subjects, num_transitions,
                          config.penalty_log_base, config.smoothing_alpha)
    structure = _learn(n, scorer, config.max_inter_parents)
    counts = collect_counts(dataset, structure)
    params = mle_parameters(counts, config.smoothing_alpha)
    score = sum(structure_score(structure, scorer))
    step = SemStep(0, log_likelihood(counts, params), score, structure, 1)
    return SemResult(Dbn(dataset.attributes, structure, params), [step], True)


# -- random DBNs ----------------------------------------------------------------

def _prufer_tree(n: int, gen: np.random.Generator) -> list[tuple[int, int]]:
    """Uniformly random labelled tree on ``n`` nodes as undirected edges."""
    if n < 2:
        return []
    seq = [int(x) for x in gen.integers(0, n, size=n - 2)]
    degree = [1] * n
    for x in seq:
        degree[x] += 1
    leaves = [i for i in range(n) if degree[i] == 1]
    heapq.heapify(leaves)
    edges = []
    for x in seq:
        leaf = heapq.heappop(leaves)
        edges.append((leaf, x))
        degree[x] -= 1
        if degree[x] == 1:
            heapq.heappush(leaves, x)
    u, v = heapq.heappop(leaves), heapq.heappop(leaves)
    edges.append((u, v))
    return edges


def random_arborescence(n: int, gen: np.random.Generator) -> list[tuple[int, int]]:
    """Uniform random spanning arborescence: a Prufer tree oriented away from a random root."""
    undirected = _prufer_tree(n, gen)
    root = int(gen.integers(0, n))
    adj = {i: [] for i in range(n)}
    for u, v in undirected:
        adj[u].append(v)
        adj[v].append(u)
    edges, stack, seen = [], [root], {root}
    while stack:
        u = stack.pop()
        for v in sorted(adj[u]):
            if v not in seen:
                seen.add(v)
                edges.append((u, v))
                stack.append(v)
    return sorted(edges)


def random_parameters(structure: DbnStructure, cards, gen: np.random.Generator) -> DbnParameters:
    """Every CPT row drawn from a flat Dirichlet."""

    def draw(i, parents):
        q = math.prod(cards[j] for _, j in parents)
        return Cpt(i, parents, gen.dirichlet(np.ones(cards[i]), size=q))

    return DbnParameters(
        prior=[draw(i, structure.prior_parents(i)) for i in range(structure.n)],
        transition=[draw(i, structure.transition_parents(i)) for i in range(structure.n)],
    )


def _random_structure(n, p, gen):
    prior = random_arborescence(n, gen)
    intra = random_arborescence(n, gen)
    k = min(p, n)
    inter = []
    for i in range(n):
        inter.extend((int(j), i) for j in gen.choice(n, size=k, replace=False))
    return DbnStructure(n, prior, intra, inter)


def default_attributes(cards: Sequence[int]) -> tuple[AttributeSpec, ...]:
    return tuple(
        AttributeSpec(f"X{i + 1}", tuple(f"v{k}" for k in range(c)))
        for i, c in enumerate(cards)
    )


def _cards(n, cardinalities):
    if isinstance(cardinalities, int):
        return (cardinalities,) * n
    cards = tuple(int(c) for c in cardinalities)
    if len(cards) != n:
        raise ValueError(f"expected {n} cardinalities, got {len(cards)}")
    return cards


def random_dbn(n: int, cardinalities, p: int, seed: int,
               attributes: Sequence[AttributeSpec] | None = None) -> Dbn:
    """Random tDBN: uniform random prior and intra-slice trees, ``min(p, n)``
    uniformly chosen inter parents per node, flat-Dirichlet CPT rows."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cards = _cards(n, cardinalities)
    structure = _random_structure(n, p, rng_mod.stream(seed, "structure"))
    params = random_parameters(structure, cards, rng_mod.stream(seed, "cpts"))
    attributes = attributes or default_attributes(cards)
    return Dbn(tuple(attributes), structure, params)


def initial_model(dataset: Dataset, config: LearnConfig) -> tuple[DbnStructure, DbnParameters]:
    """Starting point for (Structural) EM, drawn from the ``init`` stream."""
    gen = rng_mod.stream(config.seed, "init")
    n, cards = dataset.num_attributes, dataset.cardinalities
    if config.init_structure == "random":
        structure = _random_structure(n, config.max_inter_parents, gen)
    else:
        structure = DbnStructure.empty(n)
    return structure, random_parameters(structure, cards, gen)


def learn_dbn(dataset: Dataset, config: LearnConfig = LearnConfig()) -> SemResult:
    """Structural EM from the configured random (or empty) initial model."""
    structure, params = initial_model(dataset, config)
    return structural_em(structure, params, dataset, config)
