import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.attention import (
    AttentionBranch,
    QueryBlock,
    afa_compose,
    afa_stylize,
    aggregate,
    attend,
    attention,
    attention_weights,
    concat_tokens,
    load_branch,
)
from src.errors import InvalidArgumentError


def random_branch(rng: np.random.Generator, tokens: int, n_q: int = 4, n_h: int = 3) -> AttentionBranch:
    return AttentionBranch(keys=rng.normal(size=(tokens, n_q)), values=rng.normal(size=(tokens, n_h)))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


class TestAttention:
    def test_weights_are_row_stochastic(self, rng):
        weights = attention_weights(rng.normal(size=(5, 4)), rng.normal(size=(7, 4)))
        assert np.all(weights > 0)
        assert_allclose(weights.sum(axis=1), np.ones(5), atol=1e-12)

    def test_log_three_gap(self):
        weights = attention_weights([[1.0]], [[0.0], [math.log(3.0)]], scale=1.0)
        assert_allclose(weights, [[0.25, 0.75]], atol=1e-12)

    def test_single_key_returns_its_value(self, rng):
        value = np.array([[1.5, -2.0, 0.25]])
        output = attention(rng.normal(size=(3, 4)), rng.normal(size=(1, 4)), value)
        assert_allclose(output, np.repeat(value, 3, axis=0), atol=1e-15)

    def test_outputs_stay_in_value_hull(self, rng):
        branch = random_branch(rng, 9)
        output = attention(rng.normal(size=(6, 4)) * 5.0, branch.keys, branch.values)
        assert np.all(output >= branch.values.min(axis=0) - 1e-12)
        assert np.all(output <= branch.values.max(axis=0) + 1e-12)

    def test_token_order_does_not_matter(self, rng):
        branch = random_branch(rng, 8)
        queries = rng.normal(size=(4, 4))
        order = rng.permutation(8)
        assert_allclose(attention(queries, branch.keys[order], branch.values[order]),
                        attention(queries, branch.keys, branch.values), atol=1e-12)

    def test_multi_head_matches_column_slices(self, rng):
        queries, keys, values = rng.normal(size=(3, 4)), rng.normal(size=(5, 4)), rng.normal(size=(5, 6))
        expected = np.concatenate([
            attention(queries[:, :2], keys[:, :2], values[:, :3]),
            attention(queries[:, 2:], keys[:, 2:], values[:, 3:]),
        ], axis=1)
        assert_allclose(attention(queries, keys, values, num_heads=2), expected, atol=1e-12)

    def test_validation(self, rng):
        with pytest.raises(InvalidArgumentError):
            attention(rng.normal(size=(2, 4)), rng.normal(size=(3, 4)), rng.normal(size=(2, 3)))
        with pytest.raises(InvalidArgumentError):
            attention(rng.normal(size=(2, 4)), rng.normal(size=(3, 4)), rng.normal(size=(3, 3)), num_heads=3)
        with pytest.raises(InvalidArgumentError):
            attention_weights(rng.normal(size=(2, 4)), rng.normal(size=(3, 5)))
        with pytest.raises(InvalidArgumentError):
            attention_weights(rng.normal(size=(2, 4)), rng.normal(size=(3, 4)), scale=0.0)
        with pytest.raises(InvalidArgumentError):
            QueryBlock([[np.nan, 1.0]])


class TestBranches:
    def test_concat_preserves_order(self, rng):
        first, second = random_branch(rng, 2), random_branch(rng, 3)
        joined = concat_tokens([first, second])
        assert joined.num_tokens == 5
        assert_allclose(joined.keys[:2], first.keys)
        assert_allclose(joined.values[2:], second.values)

    def test_concat_rejects_width_mismatch(self, rng):
        with pytest.raises(InvalidArgumentError):
            concat_tokens([random_branch(rng, 2), random_branch(rng, 2, n_h=5)])
        with pytest.raises(InvalidArgumentError):
            AttentionBranch(keys=np.zeros((2, 4)), values=np.zeros((3, 3)))

    def test_duplicated_branch_weights(self):
        # Zero queries give uniform weights over the joined tokens.
        base = AttentionBranch(keys=[[1.0]], values=[[0.0]])
        copy = AttentionBranch(keys=[[1.0]], values=[[1.0]])
        assert attend([[0.0]], [base, copy])[0, 0] == pytest.approx(0.5)
        assert attend([[0.0]], [base, copy, copy])[0, 0] == pytest.approx(2.0 / 3.0)

    def test_load_branch_from_csv(self, tmp_path):
        (tmp_path / "k.csv").write_text("1,0\n0,1\n")
        (tmp_path / "v.csv").write_text("2\n3\n")
        branch = load_branch(tmp_path / "k.csv", tmp_path / "v.csv")
        assert branch.keys.shape == (2, 2) and branch.values.shape == (2, 1)
        (tmp_path / "ragged.csv").write_text("1,0\n1\n")
        with pytest.raises(InvalidArgumentError):
            load_branch(tmp_path / "ragged.csv", tmp_path / "v.csv")


class TestAggregation:
    def test_stylize_is_average_of_three_terms(self, rng):
        queries = rng.normal(size=(4, 4))
        base, prompt, style = (random_branch(rng, n) for n in (5, 2, 3))
        expected = (attend(queries, [base, prompt], 0.5) + attend(queries, [base, style], 0.5)
                    + attend(queries, [base, prompt, style], 0.5)) / 3.0
        assert_allclose(afa_stylize(queries, base, prompt, style, scale=0.5), expected, atol=1e-12)

    def test_compose_is_average_of_four_terms(self, rng):
        queries = rng.normal(size=(4, 4))
        base, prompt, style, content = (random_branch(rng, n) for n in (5, 2, 3, 2))
        expected = (attend(queries, [base, prompt], 0.5) + attend(queries, [base, style], 0.5)
                    + attend(queries, [base, content], 0.5) + attend(queries, [base, style, content], 0.5)) / 4.0
        assert_allclose(afa_compose(queries, base, prompt, style, content, scale=0.5), expected, atol=1e-12)

    def test_average_stays_row_convex(self, rng):
        base, prompt, style = (random_branch(rng, n) for n in (4, 4, 4))
        output = afa_stylize(rng.normal(size=(3, 4)), base, prompt, style)
        pooled = np.concatenate([base.values, prompt.values, style.values])
        assert np.all(output >= pooled.min(axis=0) - 1e-12)
        assert np.all(output <= pooled.max(axis=0) + 1e-12)

    def test_needs_a_combination(self, rng):
        with pytest.raises(InvalidArgumentError):
            aggregate(rng.normal(size=(2, 4)), random_branch(rng, 2), {}, [])
