import math
from pathlib import Path
from typing import List

import numpy as np

from src.attention.aggregation import (
    COMPOSE_COMBINATIONS,
    STYLIZE_COMBINATIONS,
    AttentionBranch,
    afa_compose,
    afa_stylize,
    attention,
    attention_weights,
    load_branch,
)
from src.config import PROJECT_ROOT
from src.experiments.base_suite import SuiteContext, VerificationSuite
from src.experiments.report import InvariantCheck

NUM_INSTANCES = 100
FIXTURE_DIR = PROJECT_ROOT / "configs" / "afa_fixture"
FIXTURE_BRANCHES = ("base", "prompt", "style", "content")


def dense_attention(queries: np.ndarray, keys: np.ndarray, values: np.ndarray, scale: float) -> np.ndarray:
    """Row-by-row softmax with explicit max subtraction; independent of scipy."""
    output = np.empty((queries.shape[0], values.shape[1]))
    for row, query in enumerate(queries):
        logits = keys @ query * scale
        weights = np.exp(logits - logits.max())
        output[row] = weights @ values / weights.sum()
    return output


def _random_branch(rng: np.random.Generator, width_q: int, width_h: int) -> AttentionBranch:
    tokens = int(rng.integers(1, 6))
    return AttentionBranch(keys=rng.normal(size=(tokens, width_q)), values=rng.normal(size=(tokens, width_h)))


class AFASuite(VerificationSuite):
    @property
    def name(self) -> str:
        return "afa"

    @property
    def description(self) -> str:
        return "Attention aggregation against a dense oracle, convexity, permutation invariance, combination counts."

    def checks(self) -> List:
        return [
            self._dense_oracle,
            self._row_sums,
            self._convex_hull,
            self._permutation_invariance,
            self._combination_averages,
            self._duplicate_tokens,
            self._worked_example,
            self._fixture_branches,
        ]

    def _dense_oracle(self, context: SuiteContext):
        rng = np.random.default_rng(context.seed)
        worst = 0.0
        for _ in range(NUM_INSTANCES):
            width_q, width_h = int(rng.integers(1, 9)), int(rng.integers(1, 9))
            queries = rng.normal(size=(int(rng.integers(1, 7)), width_q))
            branch = _random_branch(rng, width_q, width_h)
            scale = 1.0 / math.sqrt(width_q)
            gap = attention(queries, branch.keys, branch.values) - dense_attention(
                queries, branch.keys, branch.values, scale)
            worst = max(worst, float(np.max(np.abs(gap))))
        return [InvariantCheck.at_most("afa.dense_oracle", worst, 1e-12)]

    def _row_sums(self, context: SuiteContext):
        rng = np.random.default_rng(context.seed + 1)
        worst = 0.0
        for _ in range(NUM_INSTANCES):
            weights = attention_weights(rng.normal(size=(4, 3)), rng.normal(0.0, 5.0, size=(7, 3)))
            worst = max(worst, float(np.max(np.abs(weights.sum(axis=1) - 1.0))))
        return [InvariantCheck.at_most("afa.row_sums", worst, 1e-12)]

    def _convex_hull(self, context: SuiteContext):
        rng = np.random.default_rng(context.seed + 2)
        worst = 0.0
        for _ in range(NUM_INSTANCES):
            queries = rng.normal(size=(3, 4))
            branch = _random_branch(rng, 4, 3)
            output = attention(queries, branch.keys, branch.values)
            below = branch.values.min(axis=0) - output
            above = output - branch.values.max(axis=0)
            worst = max(worst, float(np.max(below)), float(np.max(above)))
        return [InvariantCheck.at_most("afa.convex_hull_violation", worst, 1e-12)]

    def _permutation_invariance(self, context: SuiteContext):
        rng = np.random.default_rng(context.seed + 3)
        worst = 0.0
        for _ in range(NUM_INSTANCES):
            queries = rng.normal(size=(2, 4))
            keys, values = rng.normal(size=(6, 4)), rng.normal(size=(6, 2))
            order = rng.permutation(6)
            gap = attention(queries, keys, values) - attention(queries, keys[order], values[order])
            worst = max(worst, float(np.max(np.abs(gap))))
        return [InvariantCheck.at_most("afa.token_permutation_invariance", worst, 1e-12)]

    def _combination_averages(self, context: SuiteContext):
        rng = np.random.default_rng(context.seed + 4)
        queries = rng.normal(size=(3, 4))
        base, prompt, style, content = (_random_branch(rng, 4, 2) for _ in range(4))

        def explicit(*branches: AttentionBranch) -> np.ndarray:
            keys = np.concatenate([branch.keys for branch in branches])
            values = np.concatenate([branch.values for branch in branches])
            return dense_attention(queries, keys, values, 0.5)

        stylized = (explicit(base, prompt) + explicit(base, style) + explicit(base, prompt, style)) / 3.0
        composed = (explicit(base, prompt) + explicit(base, style) + explicit(base, content)
                    + explicit(base, style, content)) / 4.0
        return [
            InvariantCheck.within("afa.stylize_term_count", len(STYLIZE_COMBINATIONS), 3, 0),
            InvariantCheck.within("afa.compose_term_count", len(COMPOSE_COMBINATIONS), 4, 0),
            InvariantCheck.at_most("afa.stylize_matches_explicit",
                                   float(np.max(np.abs(afa_stylize(queries, base, prompt, style) - stylized))), 1e-12),
            InvariantCheck.at_most("afa.compose_matches_explicit",
                                   float(np.max(np.abs(afa_compose(queries, base, prompt, style, content)
                                                       - composed))), 1e-12),
        ]

    def _duplicate_tokens(self, context: SuiteContext):
        # a duplicated token counts twice in the softmax
        base = AttentionBranch(keys=[[0.0]], values=[[0.0]])
        extra = AttentionBranch(keys=[[0.0]], values=[[1.0]])
        once = attention([[1.0]], np.vstack([base.keys, extra.keys]), np.vstack([base.values, extra.values]))
        twice = attention([[1.0]], np.vstack([base.keys, extra.keys, extra.keys]),
                          np.vstack([base.values, extra.values, extra.values]))
        return [
            InvariantCheck.within("afa.single_copy_weight", float(once[0, 0]), 0.5, 1e-12),
            InvariantCheck.within("afa.duplicate_copy_weight", float(twice[0, 0]), 2.0 / 3.0, 1e-12),
        ]

    def _worked_example(self, context: SuiteContext):
        # logits (ln 3, 0) give weights (3/4, 1/4)
        output = attention([[1.0]], [[math.log(3.0)], [0.0]], [[1.0, 0.0], [0.0, 1.0]], scale=1.0)
        return [
            InvariantCheck.within("afa.worked_example_first", float(output[0, 0]), 0.75, 1e-12),
            InvariantCheck.within("afa.worked_example_second", float(output[0, 1]), 0.25, 1e-12),
        ]

    def _fixture_branches(self, context: SuiteContext):
        """Stylize/compose on the CSV branches under problem.fixture_dir against explicit averages."""
        directory = Path(context.param("fixture_dir", FIXTURE_DIR))
        try:
            queries = np.loadtxt(directory / "queries.csv", delimiter=",", ndmin=2)
            branches = {name: load_branch(directory / f"{name}_keys.csv", directory / f"{name}_values.csv")
                        for name in FIXTURE_BRANCHES}
        except OSError as exc:
            return [InvariantCheck.failed("afa.fixture_branches", f"cannot read fixture in {directory}: {exc}")]

        scale = 1.0 / math.sqrt(queries.shape[1])

        def explicit(*names: str) -> np.ndarray:
            keys = np.concatenate([branches[name].keys for name in ("base", *names)])
            values = np.concatenate([branches[name].values for name in ("base", *names)])
            return dense_attention(queries, keys, values, scale)

        stylized = afa_stylize(queries, branches["base"], branches["prompt"], branches["style"])
        composed = afa_compose(queries, branches["base"], branches["prompt"], branches["style"], branches["content"])
        expected_stylized = (explicit("prompt") + explicit("style") + explicit("prompt", "style")) / 3.0
        expected_composed = (explicit("prompt") + explicit("style") + explicit("content")
                             + explicit("style", "content")) / 4.0
        all_values = np.concatenate([branch.values for branch in branches.values()])
        hull_violation = max(float(np.max(all_values.min(axis=0) - composed)),
                             float(np.max(composed - all_values.max(axis=0))))
        return [
            InvariantCheck.at_most("afa.fixture_stylize_matches_explicit",
                                   float(np.max(np.abs(stylized - expected_stylized))), 1e-12),
            InvariantCheck.at_most("afa.fixture_compose_matches_explicit",
                                   float(np.max(np.abs(composed - expected_composed))), 1e-12),
            InvariantCheck.at_most("afa.fixture_convex_hull_violation", hull_violation, 1e-12),
        ]
