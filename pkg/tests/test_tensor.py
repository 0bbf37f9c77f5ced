import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hbtucker.tensor import (
    CountFileError,
    CountTensor,
    TopicIndexMap,
    load_counts,
    normalize,
    save_counts,
    vec_index,
    vec_inverse,
)


def _write(tmp_path, text, name="c.tsv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_sums_lambda(tmp_path):
    t = load_counts(_write(tmp_path, "#dims 1 2 1\n1\t1\t1\t2\n1\t2\t1\t2\n"), p=2)
    assert t.lam.tolist() == [4]
    assert t.nnz == 2


def test_header_only_file_is_empty(tmp_path):
    t = load_counts(_write(tmp_path, "#dims 3 2 2\n"))
    assert t.nnz == 0
    assert t.lam.tolist() == [0, 0, 0]
    assert t.empty_samples.tolist() == [0, 1, 2]


def test_duplicate_lines_are_summed(tmp_path):
    t = load_counts(_write(tmp_path, "#dims 1 1 2\n1 1 1 2\n1 1 1 2\n"))
    dense = np.zeros((1, 1, 2), dtype=int)
    dense[0, 0, 0] += 2
    dense[0, 0, 0] += 2
    assert t.nnz == 1
    assert np.array_equal(t.to_dense(), dense)
    assert t.get((0, 0, 0)) == 4


@pytest.mark.parametrize(
    "text, line",
    [
        ("1 1 1\n", 1),
        ("#dims 2 2\n1 1 0\n", 2),
        ("#dims 2 2\n1 3 1\n", 2),
        ("#dims 2 2\n# note\n1 1 1\n1 x 1\n", 4),
        ("#dims 2 2\n1 1 1 1\n", 2),
        ("#dims 2 2\n0 1 1\n", 2),
    ],
)
def test_malformed_files_report_line(tmp_path, text, line):
    with pytest.raises(CountFileError) as err:
        load_counts(_write(tmp_path, text))
    assert err.value.line == line
    assert f"line {line}" in str(err.value)


def test_wrong_mode_count(tmp_path):
    with pytest.raises(CountFileError):
        load_counts(_write(tmp_path, "#dims 2 2 2\n"), p=1)


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    t = CountTensor.from_dense(rng.poisson(0.7, size=(4, 3, 2)))
    save_counts(t, tmp_path / "o.tsv")
    back = load_counts(tmp_path / "o.tsv")
    assert back.dims == t.dims
    assert np.array_equal(back.index, t.index)
    assert np.array_equal(back.counts, t.counts)


def test_normalize_examples():
    pi = normalize(CountTensor.from_dense(np.array([[2, 2]])))
    assert pi.values.tolist() == [0.5, 0.5]
    pi = normalize(CountTensor((1, 1), [[0, 0]], [7]))
    assert pi.values.tolist() == [1.0]
    pi = normalize(CountTensor((1, 2, 2), [[0, 0, 0], [0, 1, 1]], [1, 3]))
    dense = np.zeros((2, 2))
    dense[0, 0], dense[1, 1] = 1, 3
    dense /= dense.sum()
    assert pi.values.tolist() == [dense[0, 0], dense[1, 1]] == [0.25, 0.75]


def test_empty_samples_are_flagged():
    pi = normalize(CountTensor((3, 2), [[0, 1], [2, 0]], [1, 4]))
    assert pi.empty_samples.tolist() == [1]
    assert pi.sample_sum().tolist() == [1.0, 0.0, 1.0]


def test_vec_index_examples():
    assert vec_index((1, 1), TopicIndexMap((5, 7))) == 1
    assert vec_index((2, 3), TopicIndexMap((2, 4))) == 6
    m = TopicIndexMap((3, 2, 2))
    for k in itertools.product(range(1, 4), range(1, 3), range(1, 3)):
        assert vec_inverse(vec_index(k, m), m) == k


def test_vec_index_rejects_out_of_range():
    with pytest.raises(ValueError):
        vec_index((3, 1), TopicIndexMap((2, 2)))


def test_tensor_is_immutable():
    t = CountTensor((2, 2), [[0, 0]], [1])
    with pytest.raises(ValueError):
        t.counts[0] = 5


def test_select_samples_renumbers():
    t = CountTensor((3, 2), [[0, 0], [2, 1]], [1, 4])
    sub = t.select_samples([2])
    assert sub.dims == (1, 2)
    assert sub.index.tolist() == [[0, 1]]
    assert sub.lam.tolist() == [4]


dense_tensors = st.tuples(st.integers(1, 4), st.integers(1, 3), st.integers(1, 3)).flatmap(
    lambda shape: st.lists(st.integers(0, 5), min_size=int(np.prod(shape)), max_size=int(np.prod(shape))).map(
        lambda v: np.array(v).reshape(shape)
    )
)


@settings(max_examples=60, deadline=None)
@given(dense_tensors)
def test_lambda_and_normalization_invariants(dense):
    t = CountTensor.from_dense(dense)
    assert t.lam.sum() == t.counts.sum() == dense.sum()
    assert np.array_equal(t.to_dense(), dense)
    pi = normalize(t)
    nonempty = t.lam > 0
    assert np.allclose(pi.sample_sum()[nonempty], 1.0, atol=1e-9)
    back = np.rint(pi.values * t.lam[t.index[:, 0]])
    assert np.array_equal(back, t.counts)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 6), min_size=1, max_size=4))
def test_vec_is_a_bijection(K_dims):
    m = TopicIndexMap(tuple(K_dims))
    tuples = itertools.product(*[range(1, k + 1) for k in K_dims])
    image = [vec_index(k, m) for k in tuples]
    assert sorted(image) == list(range(1, m.K + 1))
