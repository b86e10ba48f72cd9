from typing import List

import numpy as np

from src.experiments.base_suite import SuiteContext, VerificationSuite
from src.experiments.report import InvariantCheck
from src.features.extractors import LinearExtractor, QuadraticExtractor
from src.features.terminal_cost import TerminalCost, terminal_cost, terminal_cost_grad

NUM_POINTS = 1000


def _central_gradient(cost: TerminalCost, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    gradient = np.empty_like(x)
    for i in range(x.shape[0]):
        offset = np.zeros_like(x)
        offset[i] = step * max(1.0, abs(x[i]))
        gradient[i] = (terminal_cost(cost, x + offset) - terminal_cost(cost, x - offset)) / (2 * offset[i])
    return gradient


class StyleFeaturesSuite(VerificationSuite):
    @property
    def name(self) -> str:
        return "style-features"

    @property
    def description(self) -> str:
        return "Extractor linearity, cost gradients against central differences, convexity and scale covariance."

    def checks(self) -> List:
        return [self._linearity, self._gradient_check, self._convexity, self._scale_covariance]

    @staticmethod
    def _linear_cost(rng: np.random.Generator) -> TerminalCost:
        return TerminalCost(LinearExtractor(rng.normal(size=(2, 3))), rng.normal(size=2))

    def _linearity(self, context: SuiteContext):
        rng = np.random.default_rng(context.seed)
        extractor = LinearExtractor(rng.normal(size=(2, 3)))
        worst = 0.0
        for _ in range(NUM_POINTS):
            x, y = rng.normal(size=3), rng.normal(size=3)
            a, b = rng.normal(size=2)
            worst = max(worst, float(np.max(np.abs(extractor(a * x + b * y) - (a * extractor(x) + b * extractor(y))))))
        return [InvariantCheck.at_most("style-features.linear_superposition", worst, 1e-12)]

    def _gradient_check(self, context: SuiteContext):
        rng = np.random.default_rng(context.seed + 1)
        costs = {
            "linear": (self._linear_cost(rng), 1e-6),
            "quadratic": (TerminalCost(QuadraticExtractor(3), rng.normal(size=3)), 1e-4),
        }
        checks = []
        for label, (cost, tolerance) in costs.items():
            worst = 0.0
            for _ in range(NUM_POINTS):
                x = rng.normal(size=3)
                analytic = terminal_cost_grad(cost, x)
                numeric = _central_gradient(cost, x)
                scale = max(1.0, float(np.max(np.abs(analytic))))
                worst = max(worst, float(np.max(np.abs(analytic - numeric))) / scale)
            checks.append(InvariantCheck.at_most(f"style-features.gradient_check[{label}]", worst, tolerance))
        return checks

    def _convexity(self, context: SuiteContext):
        rng = np.random.default_rng(context.seed + 2)
        cost = self._linear_cost(rng)
        worst = -np.inf
        for _ in range(NUM_POINTS):
            x, y = rng.normal(size=3), rng.normal(size=3)
            weight = float(rng.uniform())
            gap = terminal_cost(cost, weight * x + (1 - weight) * y) - (
                weight * terminal_cost(cost, x) + (1 - weight) * terminal_cost(cost, y)
            )
            worst = max(worst, gap)
        return [InvariantCheck.at_most("style-features.convexity_gap", worst, 1e-10)]

    def _scale_covariance(self, context: SuiteContext):
        rng = np.random.default_rng(context.seed + 3)
        matrix, reference = rng.normal(size=(2, 3)), rng.normal(size=2)
        worst = 0.0
        for _ in range(100):
            c = float(rng.uniform(0.1, 3.0))
            x = rng.normal(size=3)
            base = terminal_cost(TerminalCost(LinearExtractor(matrix), reference), x)
            scaled = terminal_cost(TerminalCost(LinearExtractor(c * matrix), c * reference), x)
            worst = max(worst, abs(scaled - c * c * base) / max(1.0, abs(scaled)))
        return [InvariantCheck.at_most("style-features.scale_covariance", worst, 1e-12)]
