import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dbnimpute import formats
from dbnimpute.errors import DatasetError
from dbnimpute.learning import random_dbn
from dbnimpute.model import MISSING, AttributeSpec, Dataset

TINY = """subject_id,A__0,B__0,A__1,B__1
p1,x,lo,y,?
p2,y,hi,,lo
"""


def test_parse_tiny():
    d = formats.parse_dataset(TINY)
    assert [a.values for a in d.attributes] == [("x", "y"), ("hi", "lo")]
    assert d.subject_ids == ("p1", "p2")
    assert d.data[:, :, 0].tolist() == [[0, 1], [1, MISSING]]
    assert d.data[0, 1, 1] == MISSING
    # missing cells always serialise as '?'
    assert formats.serialize_dataset(d).splitlines()[2] == "p2,y,hi,?,lo"


@pytest.mark.parametrize("text, msg", [
    ("", "empty"),
    ("id,A__0,A__1\n", "subject_id"),
    ("subject_id,A__0,B__1\ns,a,b\n", "grouped"),
    ("subject_id,A__0,A__1\ns,a\n", "ragged"),
    ("subject_id,A__0\ns,a\n", "2 time slices"),
    ("subject_id,A__0,A__1\ns,a,a\n", "observed symbol"),
])
def test_parse_errors(text, msg):
    with pytest.raises(DatasetError, match=msg):
        formats.parse_dataset(text)


def test_explicit_domain_rejects_unknown_symbol():
    attrs = [AttributeSpec("A", ("x", "y")), AttributeSpec("B", ("hi", "lo"))]
    formats.parse_dataset(TINY, attrs)
    with pytest.raises(DatasetError, match="unknown symbol"):
        formats.parse_dataset(TINY.replace("lo,y", "mid,y"), attrs)


@st.composite
def datasets(draw):
    n = draw(st.integers(1, 4))
    S = draw(st.integers(2, 5))
    N = draw(st.integers(1, 6))
    cards = draw(st.lists(st.integers(2, 4), min_size=n, max_size=n))
    attrs = [AttributeSpec(f"a{i}", tuple(f"s{k}" for k in range(c))) for i, c in enumerate(cards)]
    cells = draw(st.lists(st.integers(-1, 3), min_size=N * S * n, max_size=N * S * n))
    data = np.array(cells).reshape(N, S, n)
    data = np.where(data >= np.array(cards), MISSING, data)
    return Dataset(attrs, data)


@given(datasets())
@settings(max_examples=60, deadline=None)
def test_dataset_roundtrip(d):
    text = formats.serialize_dataset(d)
    back = formats.parse_dataset(text, d.attributes)
    assert back == d
    assert formats.serialize_dataset(back) == text


@pytest.mark.parametrize("seed", range(4))
def test_dbn_roundtrip_is_exact(seed, tmp_path):
    dbn = random_dbn(4, (2, 3, 2, 4), p=2, seed=seed)
    path = tmp_path / "m.dbn"
    formats.write_dbn(dbn, path)
    back = formats.read_dbn(path)
    assert back.structure == dbn.structure
    assert back.parameters == dbn.parameters
    assert formats.serialize_dbn(back) == path.read_text()


def test_dbn_parse_errors():
    text = formats.serialize_dbn(random_dbn(2, 2, 1, seed=0))
    with pytest.raises(DatasetError, match="dbn-format"):
        formats.parse_dbn(text.replace("dbn-format 1", "dbn-format 2"))
    with pytest.raises(DatasetError, match="end"):
        formats.parse_dbn(text.replace("\nend", ""))
    lines = text.splitlines()
    k = next(i for i, line in enumerate(lines) if line.startswith("row"))
    lines[k] = lines[k].rsplit(" ", 1)[0] + " 0.9"
    with pytest.raises(DatasetError, match="sum to 1"):
        formats.parse_dbn("\n".join(lines))


def test_mask_and_real_series_roundtrip(tmp_path):
    d = formats.parse_dataset(TINY)
    mask = d.missing_mask
    formats.write_mask(d, mask, tmp_path / "mask.csv")
    assert (formats.read_mask(d, tmp_path / "mask.csv") == mask).all()
    vals = np.array([[[0.5, -1.25], [np.nan, 3.0]]])
    formats.write_real_series(["u", "v"], ["z"], vals, tmp_path / "r.csv")
    names, ids, back = formats.parse_real_series(tmp_path / "r.csv")
    assert names == ["u", "v"] and ids == ["z"]
    np.testing.assert_array_equal(np.isnan(back), np.isnan(vals))
    assert np.nansum(back) == np.nansum(vals)


def test_stream_and_path_sources(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text(TINY)
    assert formats.read_dataset(p) == formats.parse_dataset(io.StringIO(TINY))
