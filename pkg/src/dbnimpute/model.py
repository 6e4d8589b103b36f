"""Core types: categorical datasets, DBN structures, CPTs and DBNs.

Conventions used throughout the package:

* Cells hold value indices ``0 .. r_i - 1``; :data:`MISSING` (``-1``) marks a
  missing cell.
* A parent is a ``(lag, attribute)`` pair. ``lag == 0`` is the child's own
  slice (an intra-slice edge, or a prior-network edge in slice 0) and
  ``lag == 1`` is the previous slice (an inter-slice edge).
* A CPT's parents are kept sorted, so intra parents come before inter parents.
  The parent configuration index is the mixed-radix encoding of the parent
  values in that order, first parent most significant (C order).
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DatasetError

MISSING = -1

#: Largest attribute cardinality accepted. An implementation limit: cells are
#: stored as int16 and windows are enumerated exhaustively, so large domains
#: hit the enumeration cap long before this.
MAX_CARDINALITY = 256

_SYMBOL = re.compile(r"^[A-Za-z0-9_-]+$")

Parent = tuple[int, int]


@dataclass(frozen=True)
class AttributeSpec:
    """A categorical attribute and its ordered value labels."""

    name: str
    values: tuple[str, ...]

    def __post_init__(self):
        values = tuple(str(v) for v in self.values)
        object.__setattr__(self, "values", values)
        if not _SYMBOL.match(self.name) or "__" in self.name:
            raise DatasetError(f"invalid attribute name {self.name!r}")
        if len(values) < 2:
            raise DatasetError(
                f"attribute {self.name!r} needs at least 2 values, got {list(values)}"
            )
        if len(values) > MAX_CARDINALITY:
            raise DatasetError(
                f"attribute {self.name!r} has {len(values)} values "
                f"(limit {MAX_CARDINALITY})"
            )
        if len(set(values)) != len(values):
            raise DatasetError(f"attribute {self.name!r} has duplicate value labels")
        for v in values:
            if not _SYMBOL.match(v):
                raise DatasetError(f"invalid symbol {v!r} for attribute {self.name!r}")

    @property
    def cardinality(self) -> int:
        return len(self.values)

    def index(self, label: str) -> int:
        try:
            return self.values.index(label)
        except ValueError:
            raise DatasetError(
                f"unknown symbol {label!r} for attribute {self.name!r}"
            ) from None


@dataclass(frozen=True, eq=False)
class Dataset:
    """N subjects, each observed over ``num_slices`` slices of n attributes.

    ``data`` has shape ``(N, T + 1, n)``; missing cells are :data:`MISSING`.
    The array is copied and made read-only on construction.
    """

    attributes: tuple[AttributeSpec, ...]
    data: np.ndarray
    subject_ids: tuple[str, ...] = None

    def __post_init__(self):
        attributes = tuple(self.attributes)
        object.__setattr__(self, "attributes", attributes)
        if len({a.name for a in attributes}) != len(attributes):
            raise DatasetError("duplicate attribute names")
        data = np.array(self.data, dtype=np.int16, copy=True)
        if data.ndim != 3:
            raise DatasetError(f"data must be 3-dimensional, got shape {data.shape}")
        n_subjects, n_slices, n_attr = data.shape
        if n_attr != len(attributes):
            raise DatasetError(
                f"data has {n_attr} attributes but {len(attributes)} specs were given"
            )
        if n_slices < 2:
            raise DatasetError(f"need at least 2 time slices, got {n_slices}")
        cards = np.array([a.cardinality for a in attributes], dtype=np.int16)
        bad = (data < MISSING) | (data >= cards)
        if bad.any():
            s, t, i = map(int, np.argwhere(bad)[0])
            raise DatasetError(
                f"cell (subject {s}, slice {t}, attribute {attributes[i].name}) "
                f"has out-of-range value index {int(data[s, t, i])}"
            )
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        ids = self.subject_ids
        if ids is None:
            ids = tuple(f"s{k + 1}" for k in range(n_subjects))
        ids = tuple(str(s) for s in ids)
        if len(ids) != n_subjects:
            raise DatasetError("subject_ids length does not match data")
        if len(set(ids)) != len(ids):
            raise DatasetError("duplicate subject ids")
        object.__setattr__(self, "subject_ids", ids)

    @property
    def num_subjects(self) -> int:
        return self.data.shape[0]

    @property
    def num_slices(self) -> int:
        return self.data.shape[1]

    @property
    def num_attributes(self) -> int:
        return self.data.shape[2]

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(a.cardinality for a in self.attributes)

    @property
    def missing_mask(self) -> np.ndarray:
        return self.data == MISSING

    @property
    def has_missing(self) -> bool:
        return bool((self.data == MISSING).any())

    def with_data(self, data: np.ndarray) -> "Dataset":
        return Dataset(self.attributes, data, self.subject_ids)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.attributes == other.attributes
            and self.subject_ids == other.subject_ids
            and self.data.shape == other.data.shape
            and bool(np.array_equal(self.data, other.data))
        )

    def __repr__(self):
        return (
            f"Dataset(N={self.num_subjects}, slices={self.num_slices}, "
            f"attributes={[a.name for a in self.attributes]}, "
            f"missing={int(self.missing_mask.sum())})"
        )


def config_index(values: Sequence[np.ndarray], radices: Sequence[int]) -> np.ndarray:
    """Mixed-radix index of parent value tuples, first parent most significant."""
    if not values:
        return np.zeros((), dtype=np.intp)
    idx = np.asarray(values[0], dtype=np.intp)
    for v, r in zip(values[1:], radices[1:]):
        idx = idx * r + np.asarray(v, dtype=np.intp)
    return idx


def parent_values(parents, cur, prev=None):
    """Columns of ``cur``/``prev`` (arrays ``(..., n)``) feeding each parent."""
    cols = []
    for lag, j in parents:
        src = cur if lag == 0 else prev
        cols.append(src[..., j])
    return cols


def family_config(cards, parents, cur, prev=None) -> np.ndarray:
    """Parent configuration index for every row of ``cur`` (shape ``(..., n)``)."""
    radices = [cards[j] for _, j in parents]
    idx = config_index(parent_values(parents, cur, prev), radices)
    return np.broadcast_to(idx, cur.shape[:-1])


def _check_acyclic(n, edges, what):
    if len(_kahn(n, edges)) != n:
        raise ValueError(f"{what} edges contain a cycle")


def _kahn(n, edges):
    children = {i: [] for i in range(n)}
    indeg = [0] * n
    for u, v in edges:
        children[u].append(v)
        indeg[v] += 1
    ready = sorted(i for i in range(n) if indeg[i] == 0)
    order = []
    while ready:
        u = ready.pop(0)
        order.append(u)
        for v in children[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                ready.append(v)
                ready.sort()
    return order


def _edges(edges):
    return tuple(sorted({(int(u), int(v)) for u, v in edges}))


@dataclass(frozen=True)
class DbnStructure:
    """Prior network over slice 0 plus a stationary two-slice transition network.

    Edges are ``(source, target)`` attribute-index pairs. ``prior_edges`` live
    in slice 0, ``intra_edges`` inside slice t+1, ``inter_edges`` go from
    slice t to slice t+1. Both intra-slice graphs are acyclic with in-degree at
    most one (tree augmented).
    """

    n: int
    prior_edges: tuple[tuple[int, int], ...] = ()
    intra_edges: tuple[tuple[int, int], ...] = ()
    inter_edges: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("a DBN needs at least one attribute")
        for name in ("prior_edges", "intra_edges", "inter_edges"):
            edges = _edges(getattr(self, name))
            object.__setattr__(self, name, edges)
            for u, v in edges:
                if not (0 <= u < self.n and 0 <= v < self.n):
                    raise ValueError(f"{name}: edge {(u, v)} out of range")
        for name in ("prior_edges", "intra_edges"):
            edges = getattr(self, name)
            if any(u == v for u, v in edges):
                raise ValueError(f"{name}: self loop")
            targets = [v for _, v in edges]
            if len(targets) != len(set(targets)):
                raise ValueError(f"{name}: a node has more than one same-slice parent")
            _check_acyclic(self.n, edges, name)

    @classmethod
    def empty(cls, n: int) -> "DbnStructure":
        return cls(n)

    @classmethod
    def self_transitions(cls, n: int) -> "DbnStructure":
        """Only ``X_i[t] -> X_i[t+1]`` for every attribute."""
        return cls(n, inter_edges=[(i, i) for i in range(n)])

    def prior_parents(self, i: int) -> tuple[Parent, ...]:
        return tuple(sorted((0, u) for u, v in self.prior_edges if v == i))

    def intra_parents(self, i: int) -> tuple[int, ...]:
        return tuple(u for u, v in self.intra_edges if v == i)

    def inter_parents(self, i: int) -> tuple[int, ...]:
        return tuple(u for u, v in self.inter_edges if v == i)

    def transition_parents(self, i: int) -> tuple[Parent, ...]:
        return tuple(
            sorted([(0, u) for u in self.intra_parents(i)]
                   + [(1, u) for u in self.inter_parents(i)])
        )

    def prior_order(self) -> list[int]:
        return _kahn(self.n, self.prior_edges)

    def transition_order(self) -> list[int]:
        return _kahn(self.n, self.intra_edges)

    def max_inter_parents(self) -> int:
        return max((len(self.inter_parents(i)) for i in range(self.n)), default=0)

    def check_tdbn(self, max_inter_parents: int) -> None:
        """Raise ``ValueError`` unless every node has at most ``p`` inter parents."""
        if self.max_inter_parents() > max_inter_parents:
            raise ValueError(
                f"a node has {self.max_inter_parents()} inter-slice parents "
                f"(limit {max_inter_parents})"
            )


@dataclass(frozen=True, eq=False)
class Cpt:
    """Conditional probability table ``table[j, k] = P(X = k | parents = config j)``."""

    variable: int
    parents: tuple[Parent, ...]
    table: np.ndarray

    def __post_init__(self):
        parents = tuple((int(l), int(j)) for l, j in self.parents)
        if list(parents) != sorted(set(parents)):
            raise ValueError(f"CPT parents must be sorted and unique: {parents}")
        object.__setattr__(self, "parents", parents)
        table = np.array(self.table, dtype=np.float64, copy=True)
        if table.ndim != 2 or table.shape[1] < 1:
            raise ValueError(f"CPT table must be 2-dimensional, got {table.shape}")
        if not np.all(np.isfinite(table)) or (table < 0).any() or (table > 1).any():
            raise ValueError(f"CPT for variable {self.variable} has entries outside [0, 1]")
        sums = table.sum(axis=1)
        if np.abs(sums - 1.0).max(initial=0.0) > 1e-9:
            raise ValueError(f"CPT rows for variable {self.variable} do not sum to 1")
        table.setflags(write=False)
        object.__setattr__(self, "table", table)

    @property
    def q(self) -> int:
        return self.table.shape[0]

    @property
    def r(self) -> int:
        return self.table.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Cpt):
            return NotImplemented
        return (
            self.variable == other.variable
            and self.parents == other.parents
            and self.table.shape == other.table.shape
            and bool(np.array_equal(self.table, other.table))
        )


@dataclass(frozen=True)
class DbnParameters:
    prior: tuple[Cpt, ...]
    transition: tuple[Cpt, ...]

    def __post_init__(self):
        object.__setattr__(self, "prior", tuple(self.prior))
        object.__setattr__(self, "transition", tuple(self.transition))

    def log_prior_term(self, alpha: float) -> float:
        """``alpha * sum(log theta)`` over every CPT entry (0 when alpha is 0)."""
        if alpha == 0:
            return 0.0
        total = 0.0
        for cpt in self.prior + self.transition:
            with np.errstate(divide="ignore"):
                total += float(np.log(cpt.table).sum())
        return alpha * total


def _check_cpts(cpts, parents_of, cards, what):
    if len(cpts) != len(cards):
        raise ValueError(f"expected {len(cards)} {what} CPTs, got {len(cpts)}")
    for i, cpt in enumerate(cpts):
        if cpt.variable != i:
            raise ValueError(f"{what} CPT {i} is for variable {cpt.variable}")
        expected = parents_of(i)
        if cpt.parents != expected:
            raise ValueError(
                f"{what} CPT {i} has parents {cpt.parents}, structure says {expected}"
            )
        q = math.prod(cards[j] for _, j in expected)
        if cpt.table.shape != (q, cards[i]):
            raise ValueError(
                f"{what} CPT {i} has shape {cpt.table.shape}, expected {(q, cards[i])}"
            )


def validate_parameters(structure: DbnStructure, parameters: DbnParameters, cards) -> None:
    """Raise ``ValueError`` unless the CPTs match the structure's families."""
    if len(cards) != structure.n:
        raise ValueError("cardinalities do not match the structure")
    _check_cpts(parameters.prior, structure.prior_parents, cards, "prior")
    _check_cpts(parameters.transition, structure.transition_parents, cards, "transition")


@dataclass(frozen=True)
class Dbn:
    """A stationary first-order Markov DBN over categorical attributes."""

    attributes: tuple[AttributeSpec, ...]
    structure: DbnStructure
    parameters: DbnParameters

    def __post_init__(self):
        object.__setattr__(self, "attributes", tuple(self.attributes))
        if len(self.attributes) != self.structure.n:
            raise ValueError("attribute count does not match the structure")
        validate_parameters(self.structure, self.parameters, self.cardinalities)

    @property
    def n(self) -> int:
        return self.structure.n

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(a.cardinality for a in self.attributes)

    @property
    def prior_cpts(self) -> tuple[Cpt, ...]:
        return self.parameters.prior

    @property
    def transition_cpts(self) -> tuple[Cpt, ...]:
        return self.parameters.transition


def uniform_parameters(structure: DbnStructure, cards: Sequence[int]) -> DbnParameters:
    def build(i, parents):
        q = math.prod(cards[j] for _, j in parents)
        return Cpt(i, parents, np.full((q, cards[i]), 1.0 / cards[i]))

    return DbnParameters(
        prior=[build(i, structure.prior_parents(i)) for i in range(structure.n)],
        transition=[build(i, structure.transition_parents(i)) for i in range(structure.n)],
    )


def joint_log_probability(dbn: Dbn, trajectory) -> float:
    """Natural-log probability of one complete trajectory of shape ``(T + 1, n)``.

    ``log P(x[0]) + sum_t log P(x[t+1] | x[t])`` with each term factorised over
    the prior or transition CPTs. Returns ``-inf`` for impossible trajectories.
    """
    traj = np.asarray(trajectory)
    if traj.ndim != 2 or traj.shape[1] != dbn.n or traj.shape[0] < 1:
        raise DatasetError(
            f"trajectory shape {traj.shape} does not match a DBN over {dbn.n} attributes"
        )
    if (traj == MISSING).any():
        raise DatasetError("trajectory contains missing cells")
    cards = dbn.cardinalities
    if ((traj < 0) | (traj >= np.array(cards))).any():
        raise DatasetError("trajectory has out-of-range values")
    total = 0.0
    for t in range(traj.shape[0]):
        cpts = dbn.prior_cpts if t == 0 else dbn.transition_cpts
        prev = traj[t - 1] if t > 0 else None
        for cpt in cpts:
            radices = [cards[j] for _, j in cpt.parents]
            j = int(config_index(parent_values(cpt.parents, traj[t], prev), radices))
            p = cpt.table[j, traj[t, cpt.variable]]
            if p <= 0.0:
                return -math.inf
            total += math.log(p)
    return total
