"""Reading and writing datasets and DBNs.

Dataset CSV
-----------
Header ``subject_id,<a1>__0,<a2>__0,...,<a1>__1,<a2>__1,...``: attribute
columns grouped by slice in ascending slice order, the same attribute order
in every slice. One row per subject. Missing cells are ``?`` (an empty cell is
also read as missing; ``?`` is always written). Symbols and attribute names
match ``[A-Za-z0-9_-]+`` and attribute names do not contain ``__``.

Real-valued series use the same layout with decimal cells.

DBN text format (version 1)
---------------------------
Line oriented, ``#`` starts a comment line, blank lines are ignored::

    dbn-format 1
    attribute <name> <label_0> <label_1> ...      # one line per attribute, in index order
    prior-edge <src> <dst>                        # slice-0 edge, attribute names
    intra-edge <src> <dst>                        # edge inside slice t+1
    inter-edge <src> <dst>                        # edge from slice t to slice t+1
    cpt prior <child>
    parents <p_1> ... <p_k>                       # prior parents as NAME[0]
    row <l_1> ... <l_k> : <prob_0> ... <prob_r-1>
    ...
    cpt transition <child>
    parents <p_1> ... <p_k>                       # NAME[t+1] (intra) then NAME[t] (inter)
    row ...
    end

Every child has exactly one ``cpt prior`` and one ``cpt transition`` block.
The ``parents`` line lists the parents in canonical order (intra before
inter, then by attribute index) and must agree with the edge lines. ``row``
lines enumerate parent configurations in mixed-radix order (first parent most
significant, last parent fastest) and repeat the parent labels for
readability; a parentless CPT has a single ``row : ...`` line. Probabilities
are written as shortest round-trip decimal literals, so write/read is exact.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import DatasetError
from .model import (
    MISSING,
    AttributeSpec,
    Cpt,
    Dataset,
    Dbn,
    DbnParameters,
    DbnStructure,
)

MISSING_TOKEN = "?"
_MISSING_READ = {"?", ""}


def _read_csv(source) -> list[list[str]]:
    if isinstance(source, Path):
        with open(source, encoding="utf-8", newline="") as fh:
            return [row for row in csv.reader(fh) if row]
    if isinstance(source, str):
        source = io.StringIO(source)
    return [row for row in csv.reader(source) if row]


def _parse_header(header: Sequence[str]):
    if not header or header[0].strip() != "subject_id":
        raise DatasetError("malformed header: first column must be 'subject_id'")
    columns = []
    for col in header[1:]:
        name, sep, slice_ = col.strip().rpartition("__")
        if not sep or not name or not slice_.isdigit():
            raise DatasetError(f"malformed header column {col!r}; expected <attr>__<slice>")
        columns.append((name, int(slice_)))
    if not columns:
        raise DatasetError("malformed header: no attribute columns")
    names = []
    for name, s in columns:
        if s != 0:
            break
        names.append(name)
    n = len(names)
    if n == 0 or len(columns) % n:
        raise DatasetError("malformed header: slices do not all list the same attributes")
    num_slices = len(columns) // n
    for k, (name, s) in enumerate(columns):
        if (name, s) != (names[k % n], k // n):
            raise DatasetError(
                "malformed header: columns must be grouped by ascending slice "
                f"with the same attribute order (column {name}__{s})"
            )
    if num_slices < 2:
        raise DatasetError(f"need at least 2 time slices, got {num_slices}")
    return names, num_slices


def _read_rows(source):
    rows = _read_csv(source)
    if not rows:
        raise DatasetError("malformed header: empty input")
    names, num_slices = _parse_header(rows[0])
    width = len(rows[0])
    for k, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise DatasetError(f"ragged row on line {k}: {len(row)} columns, expected {width}")
    body = rows[1:]
    ids = [row[0].strip() for row in body]
    cells = [[c.strip() for c in row[1:]] for row in body]
    return names, num_slices, ids, cells


def parse_dataset(source, attributes: Sequence[AttributeSpec] | None = None) -> Dataset:
    """Parse a categorical dataset CSV.

    ``source`` is a text stream, a CSV string, or a :class:`~pathlib.Path`.
    Without ``attributes`` each domain is the lexicographically sorted set of
    observed labels. With ``attributes`` the names must match the header and
    every symbol must belong to its attribute's domain.
    """
    names, num_slices, ids, cells = _read_rows(source)
    n = len(names)
    if attributes is None:
        observed = [set() for _ in range(n)]
        for row in cells:
            for k, c in enumerate(row):
                if c not in _MISSING_READ:
                    observed[k % n].add(c)
        specs = []
        for name, labels in zip(names, observed):
            if len(labels) < 2:
                raise DatasetError(
                    f"attribute {name!r} has {len(labels)} observed symbol(s); "
                    "supply the attribute domains explicitly"
                )
            specs.append(AttributeSpec(name, tuple(sorted(labels))))
        attributes = specs
    attributes = tuple(attributes)
    if [a.name for a in attributes] != names:
        raise DatasetError(
            f"header attributes {names} do not match the given specs "
            f"{[a.name for a in attributes]}"
        )
    lookup = [{v: k for k, v in enumerate(a.values)} for a in attributes]
    data = np.full((len(cells), num_slices, n), MISSING, dtype=np.int16)
    for s, row in enumerate(cells):
        for k, c in enumerate(row):
            if c in _MISSING_READ:
                continue
            t, i = divmod(k, n)
            try:
                data[s, t, i] = lookup[i][c]
            except KeyError:
                raise DatasetError(
                    f"unknown symbol {c!r} for attribute {names[i]!r} "
                    f"(subject {ids[s]!r}, slice {t})"
                ) from None
    return Dataset(attributes, data, tuple(ids))


def read_dataset(path, attributes=None) -> Dataset:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_dataset(fh, attributes)


def _header(names: Sequence[str], num_slices: int) -> list[str]:
    return ["subject_id"] + [f"{a}__{t}" for t in range(num_slices) for a in names]


def dump_dataset(dataset: Dataset, stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    names = [a.name for a in dataset.attributes]
    writer.writerow(_header(names, dataset.num_slices))
    for sid, grid in zip(dataset.subject_ids, dataset.data):
        row = [sid]
        for t in range(dataset.num_slices):
            for i, attr in enumerate(dataset.attributes):
                v = int(grid[t, i])
                row.append(MISSING_TOKEN if v == MISSING else attr.values[v])
        writer.writerow(row)


def serialize_dataset(dataset: Dataset) -> str:
    buf = io.StringIO()
    dump_dataset(dataset, buf)
    return buf.getvalue()


def write_dataset(dataset: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        dump_dataset(dataset, fh)


def parse_real_series(source):
    """Read a real-valued series CSV.

    Returns ``(attribute_names, subject_ids, values)`` with ``values`` of shape
    ``(N, T', n)``; missing cells become NaN.
    """
    names, num_slices, ids, cells = _read_rows(source)
    n = len(names)
    values = np.full((len(cells), num_slices, n), np.nan)
    for s, row in enumerate(cells):
        for k, c in enumerate(row):
            if c in _MISSING_READ:
                continue
            try:
                values[s, k // n, k % n] = float(c)
            except ValueError:
                raise DatasetError(f"non-numeric cell {c!r} (subject {ids[s]!r})") from None
    return names, ids, values


def write_real_series(names, ids, values, path) -> None:
    values = np.asarray(values, dtype=float)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_header(names, values.shape[1]))
        for sid, grid in zip(ids, values):
            writer.writerow([sid] + [repr(float(x)) for x in grid.reshape(-1)])


def write_mask(dataset: Dataset, mask: np.ndarray, path) -> None:
    """Write the masked cells as ``subject_id,slice,attribute`` rows."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["subject_id", "slice", "attribute"])
        for s, t, i in np.argwhere(mask):
            writer.writerow([dataset.subject_ids[s], int(t), dataset.attributes[i].name])


def read_mask(dataset: Dataset, path) -> np.ndarray:
    ids = {sid: k for k, sid in enumerate(dataset.subject_ids)}
    names = {a.name: k for k, a in enumerate(dataset.attributes)}
    mask = np.zeros(dataset.data.shape, dtype=bool)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["subject_id", "slice", "attribute"]:
            raise DatasetError("malformed mask header")
        for row in reader:
            if not row:
                continue
            try:
                mask[ids[row[0]], int(row[1]), names[row[2]]] = True
            except (KeyError, ValueError, IndexError):
                raise DatasetError(f"bad mask row {row}") from None
    return mask


# -- DBN text format ---------------------------------------------------------

def _parent_token(attributes, parent, prior):
    lag, j = parent
    name = attributes[j].name
    if prior:
        return f"{name}[0]"
    return f"{name}[t+1]" if lag == 0 else f"{name}[t]"


def dump_dbn(dbn: Dbn, stream: TextIO) -> None:
    attrs = dbn.attributes
    w = stream.write
    w("dbn-format 1\n")
    for a in attrs:
        w(f"attribute {a.name} {' '.join(a.values)}\n")
    for kind, edges in (
        ("prior-edge", dbn.structure.prior_edges),
        ("intra-edge", dbn.structure.intra_edges),
        ("inter-edge", dbn.structure.inter_edges),
    ):
        for u, v in edges:
            w(f"{kind} {attrs[u].name} {attrs[v].name}\n")
    for kind, cpts in (("prior", dbn.prior_cpts), ("transition", dbn.transition_cpts)):
        for cpt in cpts:
            w(f"cpt {kind} {attrs[cpt.variable].name}\n")
            tokens = [_parent_token(attrs, p, kind == "prior") for p in cpt.parents]
            w("parents" + "".join(" " + t for t in tokens) + "\n")
            domains = [attrs[j].values for _, j in cpt.parents]
            for row, labels in zip(cpt.table, itertools.product(*domains)):
                probs = " ".join(repr(float(p)) for p in row)
                lead = " ".join(labels)
                w(f"row {lead} : {probs}\n" if lead else f"row : {probs}\n")
    w("end\n")


def serialize_dbn(dbn: Dbn) -> str:
    buf = io.StringIO()
    dump_dbn(dbn, buf)
    return buf.getvalue()


def write_dbn(dbn: Dbn, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        dump_dbn(dbn, fh)


def _lines(text: str) -> Iterable[tuple[int, list[str]]]:
    for k, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if line and not line.startswith("#"):
            yield k, line.split()


def parse_dbn(source) -> Dbn:
    """Parse the DBN text format; raises :class:`DatasetError` on bad input."""
    text = source if isinstance(source, str) else source.read()
    lines = list(_lines(text))

    def fail(lineno, msg):
        raise DatasetError(f"DBN file line {lineno}: {msg}")

    if not lines or lines[0][1] != ["dbn-format", "1"]:
        fail(lines[0][0] if lines else 0, "expected 'dbn-format 1'")
    attrs, edges = [], {"prior-edge": [], "intra-edge": [], "inter-edge": []}
    pos = 1
    while pos < len(lines) and lines[pos][1][0] == "attribute":
        lineno, tok = lines[pos]
        if len(tok) < 4:
            fail(lineno, "attribute needs a name and at least 2 labels")
        attrs.append(AttributeSpec(tok[1], tuple(tok[2:])))
        pos += 1
    if not attrs:
        fail(lines[pos][0] if pos < len(lines) else 0, "no attributes")
    index = {a.name: k for k, a in enumerate(attrs)}
    while pos < len(lines) and lines[pos][1][0] in edges:
        lineno, tok = lines[pos]
        if len(tok) != 3 or tok[1] not in index or tok[2] not in index:
            fail(lineno, "bad edge line")
        edges[tok[0]].append((index[tok[1]], index[tok[2]]))
        pos += 1
    try:
        structure = DbnStructure(
            len(attrs), edges["prior-edge"], edges["intra-edge"], edges["inter-edge"]
        )
    except ValueError as exc:
        raise DatasetError(f"DBN file: invalid structure: {exc}") from None

    cards = [a.cardinality for a in attrs]
    tables = {"prior": {}, "transition": {}}
    while pos < len(lines) and lines[pos][1][0] == "cpt":
        lineno, tok = lines[pos]
        if len(tok) != 3 or tok[1] not in tables or tok[2] not in index:
            fail(lineno, "bad cpt line")
        kind, child = tok[1], index[tok[2]]
        if child in tables[kind]:
            fail(lineno, f"duplicate {kind} CPT for {tok[2]}")
        expected = (structure.prior_parents(child) if kind == "prior"
                    else structure.transition_parents(child))
        pos += 1
        if pos >= len(lines) or lines[pos][1][0] != "parents":
            fail(lineno, "expected a parents line")
        lineno, tok = lines[pos]
        want = [_parent_token(attrs, p, kind == "prior") for p in expected]
        if tok[1:] != want:
            fail(lineno, f"parents {tok[1:]} disagree with the edges (expected {want})")
        pos += 1
        domains = [attrs[j].values for _, j in expected]
        rows = []
        for labels in itertools.product(*domains):
            if pos >= len(lines) or lines[pos][1][0] != "row":
                fail(lines[min(pos, len(lines) - 1)][0], "missing CPT row")
            lineno, tok = lines[pos]
            if ":" not in tok:
                fail(lineno, "row needs ':'")
            colon = tok.index(":")
            if tuple(tok[1:colon]) != labels:
                fail(lineno, f"row labels {tok[1:colon]} out of order (expected {list(labels)})")
            try:
                probs = [float(x) for x in tok[colon + 1:]]
            except ValueError:
                fail(lineno, "bad probability literal")
            if len(probs) != cards[child] or not all(math.isfinite(p) for p in probs):
                fail(lineno, f"expected {cards[child]} probabilities")
            rows.append(probs)
            pos += 1
        try:
            tables[kind][child] = Cpt(child, expected, np.array(rows, dtype=float))
        except ValueError as exc:
            fail(lineno, str(exc))
    if pos >= len(lines) or lines[pos][1] != ["end"]:
        fail(lines[min(pos, len(lines) - 1)][0], "expected 'end'")
    for kind in tables:
        missing = [attrs[i].name for i in range(len(attrs)) if i not in tables[kind]]
        if missing:
            raise DatasetError(f"DBN file: no {kind} CPT for {missing}")
    params = DbnParameters(
        prior=[tables["prior"][i] for i in range(len(attrs))],
        transition=[tables["transition"][i] for i in range(len(attrs))],
    )
    return Dbn(tuple(attrs), structure, params)


def read_dbn(path) -> Dbn:
    with open(path, encoding="utf-8") as fh:
        return parse_dbn(fh)
