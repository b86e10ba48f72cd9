import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.errors import InvalidArgumentError, NumericalFailureError
from src.features import (
    INFINITE_GAMMA,
    CompositeExtractor,
    FunctionExtractor,
    LinearExtractor,
    QuadraticExtractor,
    TerminalCost,
    build_extractor,
    extractor_jacobian,
    parse_gamma,
    terminal_cost,
    terminal_cost_grad,
)


def central_gradient(cost: TerminalCost, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    return np.array([(terminal_cost(cost, x + step * e) - terminal_cost(cost, x - step * e)) / (2 * step)
                     for e in np.eye(x.shape[0])])


class TestExtractors:
    def test_linear_superposition(self):
        rng = np.random.default_rng(0)
        extractor = LinearExtractor(rng.normal(size=(2, 3)))
        x, y = rng.normal(size=3), rng.normal(size=3)
        assert_allclose(extractor(2.0 * x - 0.5 * y), 2.0 * extractor(x) - 0.5 * extractor(y), atol=1e-12)

    def test_batches(self):
        extractor = QuadraticExtractor(2)
        xs = np.arange(12.0).reshape(2, 3, 2)
        assert extractor(xs).shape == (2, 3, 2)
        assert extractor_jacobian(extractor, xs).shape == (2, 3, 2, 2)

    def test_wrong_dimension(self):
        with pytest.raises(InvalidArgumentError):
            LinearExtractor(np.eye(2))(np.zeros(3))

    def test_composite_stacks_parts(self):
        composite = CompositeExtractor([LinearExtractor([[1.0, 0.0]]), QuadraticExtractor(2)])
        x = np.array([3.0, -2.0])
        assert_allclose(composite(x), [3.0, 9.0, 4.0])
        assert_allclose(extractor_jacobian(composite, x), [[1.0, 0.0], [6.0, 0.0], [0.0, -4.0]])

    def test_composite_rejects_mixed_dimensions(self):
        with pytest.raises(InvalidArgumentError):
            CompositeExtractor([LinearExtractor(np.eye(2)), QuadraticExtractor(3)])

    def test_function_extractor_uses_finite_differences(self):
        extractor = FunctionExtractor(lambda x: np.array([np.sin(x[0]) * x[1]]), input_dim=2, output_dim=1)
        x = np.array([0.4, 1.5])
        expected = [[np.cos(0.4) * 1.5, np.sin(0.4)]]
        assert_allclose(extractor_jacobian(extractor, x), expected, rtol=1e-7)

    def test_function_extractor_non_finite_jacobian(self):
        extractor = FunctionExtractor(lambda x: np.array([1.0 / x[0] if x[0] > 0 else np.inf]), 1, 1)
        with pytest.raises(NumericalFailureError):
            extractor_jacobian(extractor, np.array([0.0]))

    @pytest.mark.parametrize("kind, options, expected", [
        ("identity", {}, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]),
        ("project", {"coordinates": [2]}, [[0.0, 0.0, 1.0]]),
        ("linear", {"matrix": [[1.0, 2.0, 3.0]]}, [[1.0, 2.0, 3.0]]),
    ])
    def test_build_linear_variants(self, kind, options, expected):
        extractor = build_extractor(kind, dimension=3, **options)
        assert_allclose(extractor.matrix, expected)

    def test_build_composite_and_unknown(self):
        composite = build_extractor("composite", dimension=2,
                                    parts=[{"kind": "identity"}, {"kind": "quadratic"}])
        assert composite.output_dim == 4
        with pytest.raises(InvalidArgumentError):
            build_extractor("gram", dimension=2)
        with pytest.raises(InvalidArgumentError):
            build_extractor("linear", dimension=3, matrix=[[1.0, 2.0]])


class TestTerminalCost:
    def test_value(self):
        cost = TerminalCost(LinearExtractor([[1.0, 0.0]]), np.array([2.0]))
        assert terminal_cost(cost, np.array([0.5, 7.0])) == pytest.approx(2.25)
        assert terminal_cost(cost, np.zeros((3, 2))).shape == (3,)

    def test_linear_gradient_closed_form(self):
        rng = np.random.default_rng(1)
        A, ref, x = rng.normal(size=(2, 3)), rng.normal(size=2), rng.normal(size=3)
        cost = TerminalCost(LinearExtractor(A), ref)
        assert_allclose(terminal_cost_grad(cost, x), 2.0 * A.T @ (A @ x - ref), atol=1e-12)

    def test_quadratic_gradient_against_differences(self):
        cost = TerminalCost(QuadraticExtractor(3), np.array([0.5, 1.0, -0.2]))
        x = np.array([0.3, -1.1, 0.8])
        assert_allclose(terminal_cost_grad(cost, x), central_gradient(cost, x), rtol=1e-6)

    def test_convex_along_segment(self):
        rng = np.random.default_rng(2)
        cost = TerminalCost(LinearExtractor(rng.normal(size=(2, 3))), rng.normal(size=2))
        x, y = rng.normal(size=3), rng.normal(size=3)
        middle = terminal_cost(cost, 0.5 * (x + y))
        assert middle <= 0.5 * (terminal_cost(cost, x) + terminal_cost(cost, y)) + 1e-12

    def test_reference_dimension(self):
        with pytest.raises(InvalidArgumentError):
            TerminalCost(LinearExtractor(np.eye(2)), np.zeros(3))

    @pytest.mark.parametrize("raw", ["inf", "Infinite", "+inf"])
    def test_parse_infinite_gamma(self, raw):
        assert parse_gamma(raw) is INFINITE_GAMMA

    @pytest.mark.parametrize("raw", [0.0, -2.0, float("inf"), "large", True])
    def test_rejects_bad_gamma(self, raw):
        with pytest.raises(InvalidArgumentError):
            parse_gamma(raw)
