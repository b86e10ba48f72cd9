"""
Attention feature aggregation.

Key/value branches are concatenated along the token axis and the attention
outputs of several branch combinations are averaged uniformly.
"""

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.special import softmax

from src.errors import InvalidArgumentError


def _finite_matrix(values, label: str) -> np.ndarray:
    matrix = np.array(values, dtype=np.float64)
    if matrix.ndim != 2:
        raise InvalidArgumentError(f"{label} must be a matrix, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise InvalidArgumentError(f"{label} has non-finite entries")
    matrix.setflags(write=False)
    return matrix


@dataclass(frozen=True)
class AttentionBranch:
    """Pre-projected keys (m x n_q) and values (m x n_h) of one token source."""

    keys: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        keys = _finite_matrix(self.keys, "keys")
        values = _finite_matrix(self.values, "values")
        if keys.shape[0] != values.shape[0]:
            raise InvalidArgumentError(f"keys have {keys.shape[0]} tokens but values have {values.shape[0]}")
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "values", values)

    @property
    def num_tokens(self) -> int:
        return self.keys.shape[0]

    @property
    def key_width(self) -> int:
        return self.keys.shape[1]

    @property
    def value_width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class QueryBlock:
    """Queries (d_tok x n_q), one row per latent token."""

    queries: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "queries", _finite_matrix(self.queries, "queries"))

    @property
    def width(self) -> int:
        return self.queries.shape[1]


def _queries(Q) -> np.ndarray:
    return Q.queries if isinstance(Q, QueryBlock) else _finite_matrix(Q, "queries")


def attention_weights(Q, K, scale: Optional[float] = None) -> np.ndarray:
    """Row-stochastic softmax(Q K^T * scale); default scale 1/sqrt(n_q)."""
    queries = _queries(Q)
    keys = np.asarray(K, dtype=np.float64)
    if keys.ndim != 2 or keys.shape[0] == 0:
        raise InvalidArgumentError("attention needs at least one key")
    if queries.shape[1] != keys.shape[1]:
        raise InvalidArgumentError(f"query width {queries.shape[1]} != key width {keys.shape[1]}")
    if scale is None:
        scale = 1.0 / math.sqrt(queries.shape[1])
    if not scale > 0:
        raise InvalidArgumentError(f"scale must be positive, got {scale}")
    return softmax(queries @ keys.T * scale, axis=-1)


def attention(Q, K, V, scale: Optional[float] = None, num_heads: int = 1) -> np.ndarray:
    """
    softmax(Q K^T * scale) V, optionally split into num_heads even column
    slices of (Q, K) and V whose outputs are concatenated.
    """
    queries = _queries(Q)
    keys = np.asarray(K, dtype=np.float64)
    values = np.asarray(V, dtype=np.float64)
    if values.ndim != 2 or keys.ndim != 2 or keys.shape[0] != values.shape[0]:
        raise InvalidArgumentError(f"keys {keys.shape} and values {values.shape} must share a token count")
    if keys.shape[0] == 0:
        raise InvalidArgumentError("attention needs at least one key")
    if num_heads < 1 or queries.shape[1] % num_heads or values.shape[1] % num_heads:
        raise InvalidArgumentError(
            f"{num_heads} heads do not evenly split n_q={queries.shape[1]} and n_h={values.shape[1]}"
        )
    if num_heads == 1:
        return attention_weights(queries, keys, scale) @ values

    head_q = queries.shape[1] // num_heads
    head_h = values.shape[1] // num_heads
    if scale is None:
        scale = 1.0 / math.sqrt(head_q)
    outputs = []
    for head in range(num_heads):
        q_slice = slice(head * head_q, (head + 1) * head_q)
        h_slice = slice(head * head_h, (head + 1) * head_h)
        weights = attention_weights(queries[:, q_slice], keys[:, q_slice], scale)
        outputs.append(weights @ values[:, h_slice])
    return np.concatenate(outputs, axis=1)


def concat_tokens(branches: Sequence[AttentionBranch]) -> AttentionBranch:
    """[K; K_p; ...] and [V; V_p; ...], order preserved."""
    if not branches:
        raise InvalidArgumentError("concat_tokens needs at least one branch")
    if len(branches) == 1:
        return branches[0]
    key_widths = {branch.key_width for branch in branches}
    value_widths = {branch.value_width for branch in branches}
    if len(key_widths) != 1 or len(value_widths) != 1:
        raise InvalidArgumentError(
            f"branches disagree on widths: n_q in {sorted(key_widths)}, n_h in {sorted(value_widths)}"
        )
    return AttentionBranch(
        keys=np.concatenate([branch.keys for branch in branches], axis=0),
        values=np.concatenate([branch.values for branch in branches], axis=0),
    )


def attend(Q, branches: Sequence[AttentionBranch], scale: Optional[float] = None, num_heads: int = 1) -> np.ndarray:
    joined = concat_tokens(branches)
    return attention(Q, joined.keys, joined.values, scale, num_heads)


# Branch combinations appended to the base tokens, in averaging order.
STYLIZE_COMBINATIONS = (("prompt",), ("style",), ("prompt", "style"))
# No prompt+style term for composition.
COMPOSE_COMBINATIONS = (("prompt",), ("style",), ("content",), ("style", "content"))


def aggregate(Q, base: AttentionBranch, named: dict[str, AttentionBranch], combinations: Sequence[tuple[str, ...]],
              scale: Optional[float] = None, num_heads: int = 1) -> np.ndarray:
    """Uniform average of Attention(Q, [base; combo...]) over the combinations."""
    if not combinations:
        raise InvalidArgumentError("aggregate needs at least one branch combination")
    outputs = [attend(Q, [base, *(named[key] for key in combo)], scale, num_heads) for combo in combinations]
    return sum(outputs) / len(outputs)


def afa_stylize(Q, base: AttentionBranch, prompt: AttentionBranch, style: AttentionBranch,
                scale: Optional[float] = None, num_heads: int = 1) -> np.ndarray:
    """Avg(A_text, A_style, A_text+style)."""
    named = {"prompt": prompt, "style": style}
    return aggregate(Q, base, named, STYLIZE_COMBINATIONS, scale, num_heads)


def afa_compose(Q, base: AttentionBranch, prompt: AttentionBranch, style: AttentionBranch,
                content: AttentionBranch, scale: Optional[float] = None, num_heads: int = 1) -> np.ndarray:
    """Avg(A_text, A_style, A_content, A_content+style)."""
    named = {"prompt": prompt, "style": style, "content": content}
    return aggregate(Q, base, named, COMPOSE_COMBINATIONS, scale, num_heads)


def _read_matrix(path: Path) -> np.ndarray:
    with open(path, newline="") as handle:
        rows = [[float(cell) for cell in row] for row in csv.reader(handle) if row]
    if not rows:
        raise InvalidArgumentError(f"{path} holds no rows")
    if len({len(row) for row in rows}) != 1:
        raise InvalidArgumentError(f"{path} has ragged rows")
    return np.asarray(rows, dtype=np.float64)


def load_branch(keys_csv: str | Path, values_csv: str | Path) -> AttentionBranch:
    """Branch fixture from two header-less CSV files, one token per row."""
    return AttentionBranch(keys=_read_matrix(Path(keys_csv)), values=_read_matrix(Path(values_csv)))
