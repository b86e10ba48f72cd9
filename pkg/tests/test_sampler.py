import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from pydantic import ValidationError

from src.diffusion.sampling import ddim_sample
from src.diffusion.schedules import OrnsteinUhlenbeckPath, VariancePreservingPath, make_schedule
from src.diffusion.score_models import CountingScoreModel, GaussianMixture, IsotropicGaussian, ScoreModel, TabulatedScore
from src.errors import InvalidArgumentError, NumericalFailureError
from src.experiments.suites.soc_sampler import benchmark_config, benchmark_problem
from src.features.extractors import LinearExtractor, QuadraticExtractor
from src.features.terminal_cost import TerminalCost, terminal_cost
from src.sampler import GradientMode, ModulatedSampler, ProxInit, SamplerConfig, proximal_x0_solve


@pytest.fixture
def problem():
    return benchmark_problem()


def make_sampler(problem, callback=None, **overrides) -> ModulatedSampler:
    schedule, score, cost = problem
    return ModulatedSampler(score, cost, schedule, benchmark_config(**overrides), step_callback=callback)


class TestSamplerConfig:
    def test_defaults_are_valid(self):
        config = SamplerConfig()
        assert config.opt_steps >= 0 and config.stepsize > 0

    @pytest.mark.parametrize("overrides", [
        {"stepsize": 0.0},
        {"stepsize": float("nan")},
        {"opt_steps": -1},
        {"num_steps": 0},
        {"proximal_strength": -1.0},
        {"momentum": 0.9},
    ])
    def test_rejects_bad_values(self, overrides):
        with pytest.raises(ValidationError):
            SamplerConfig(**overrides)

    def test_proximal_strength_required(self):
        with pytest.raises(InvalidArgumentError):
            SamplerConfig().require_proximal_strength()

    def test_schedule_must_match(self, problem):
        schedule, score, cost = problem
        with pytest.raises(InvalidArgumentError):
            ModulatedSampler(score, cost, make_schedule(10), benchmark_config())

    def test_cost_dimension_must_match(self, problem):
        schedule, score, _ = problem
        with pytest.raises(InvalidArgumentError):
            ModulatedSampler(score, TerminalCost(QuadraticExtractor(3), np.zeros(3)), schedule, benchmark_config())


class TestGradientSampler:
    def test_zero_inner_steps_is_ddim(self, problem):
        schedule, score, _ = problem
        x = np.array([0.8, -0.3])
        trajectory = make_sampler(problem, opt_steps=0).run_algorithm1(x)
        assert_array_equal(trajectory.final_state, ddim_sample(x, score, schedule))
        assert all(not np.any(u) for u in trajectory.controls)

    def test_trajectory_layout(self, problem):
        trajectory = make_sampler(problem).run_algorithm1(seed=3)
        assert len(trajectory.states) == 51
        assert len(trajectory.controls) == 50
        assert len(trajectory.costs) == 51
        assert trajectory.times[0] == 50 and trajectory.times[-1] == 0
        assert trajectory.costs[-1] == pytest.approx(terminal_cost(problem[2], trajectory.final_state))

    def test_same_seed_is_bitwise_repeatable(self, problem):
        first = make_sampler(problem).run_algorithm1(seed=11)
        second = make_sampler(problem).run_algorithm1(seed=11)
        assert_array_equal(np.stack(first.states), np.stack(second.states))
        other = make_sampler(problem).run_algorithm1(seed=12)
        assert not np.array_equal(first.states[0], other.states[0])

    def test_callback_sees_every_reset_and_iteration(self, problem):
        events = []
        make_sampler(problem, callback=lambda step, kind, data: events.append((step, kind, data))).run_algorithm1(seed=0)
        resets = [data for _, kind, data in events if kind == "controller-reset"]
        assert len(resets) == 50
        assert all(data["norm"] == 0.0 for data in resets)
        assert sum(kind == "inner-iteration" for _, kind, _ in events) == 150
        assert [step for step, kind, _ in events if kind == "step-completed"] == list(range(50, 0, -1))

    def test_callback_errors_do_not_stop_sampling(self, problem):
        def explode(step, kind, data):
            raise RuntimeError("listener failure")

        trajectory = make_sampler(problem, callback=explode).run_algorithm1(seed=0)
        assert len(trajectory.states) == 51

    def test_control_improves_terminal_cost(self, problem):
        sampler = make_sampler(problem)
        controlled, plain = [], []
        for seed in range(10):
            start = sampler.initial_state(seed)
            controlled.append(sampler.run_algorithm1(start).costs[-1])
            plain.append(sampler.run_uncontrolled(start).costs[-1])
        assert np.mean(controlled) < 0.5 * np.mean(plain)

    def test_analytic_and_finite_difference_gradients_agree(self):
        schedule = make_schedule(20)
        mixture = GaussianMixture([0.4, 0.6], [[-1.0, 0.5], [1.0, -0.5]], [0.5, 1.0], VariancePreservingPath(schedule))
        cost = TerminalCost(QuadraticExtractor(2), np.array([1.0, 0.25]))
        x_t, u = np.array([0.3, -0.6]), np.array([0.05, 0.1])
        analytic = ModulatedSampler(mixture, cost, schedule, SamplerConfig(num_steps=20))
        numeric = ModulatedSampler(mixture, cost, schedule,
                                   SamplerConfig(num_steps=20, gradient_mode=GradientMode.FINITE_DIFFERENCE))
        assert_allclose(numeric.control_gradient(x_t, u, 7), analytic.control_gradient(x_t, u, 7),
                        rtol=1e-5, atol=1e-8)

    def test_tabulated_score_falls_back_to_finite_differences(self):
        schedule = make_schedule(10)
        table = TabulatedScore.from_model(IsotropicGaussian([0.0], 1.0, OrnsteinUhlenbeckPath()),
                                          np.linspace(0.0, 1.0, 11), np.linspace(-6.0, 6.0, 25))
        cost = TerminalCost(LinearExtractor([[1.0]]), np.array([1.0]))
        sampler = ModulatedSampler(table, cost, schedule, SamplerConfig(num_steps=10))
        assert sampler.gradient_mode is GradientMode.FINITE_DIFFERENCE
        assert np.all(np.isfinite(sampler.control_gradient(np.array([0.2]), np.zeros(1), 5)))

    def test_non_finite_score_reports_step(self, problem):
        schedule, _, cost = problem

        class Exploding(ScoreModel):
            name = "exploding"
            dimension = 2

            def score(self, x, t, context=None):
                return np.full(np.shape(x), np.inf) if t < 0.5 else -np.asarray(x)

        sampler = ModulatedSampler(Exploding(), cost, schedule, benchmark_config(opt_steps=0))
        with pytest.raises(NumericalFailureError) as info:
            sampler.run_algorithm1(np.zeros(2))
        assert info.value.step is not None and info.value.step < 25


class TestProximalSampler:
    def test_fixed_point_is_ridge_solution(self):
        A = np.array([[1.0, 0.5], [0.0, 1.0]])
        reference, x0_bar, strength = np.array([1.0, -2.0]), np.array([0.3, 0.7]), 1.0
        cost = TerminalCost(LinearExtractor(A), reference)
        config = SamplerConfig(stepsize=0.05, opt_steps=2000, proximal_strength=strength)
        expected = np.linalg.solve(A.T @ A + strength * np.eye(2), A.T @ reference + strength * x0_bar)
        assert_allclose(proximal_x0_solve(x0_bar, cost, config), expected, atol=1e-10)

    def test_initialisation_does_not_change_fixed_point(self):
        cost = TerminalCost(LinearExtractor([[2.0, 0.0]]), np.array([1.0]))
        x0_bar = np.array([0.5, -1.0])
        from_mean = proximal_x0_solve(x0_bar, cost, SamplerConfig(stepsize=0.05, opt_steps=3000, proximal_strength=0.5))
        from_zero = proximal_x0_solve(x0_bar, cost, SamplerConfig(stepsize=0.05, opt_steps=3000, proximal_strength=0.5,
                                                                  prox_init=ProxInit.ZERO))
        assert_allclose(from_mean, from_zero, atol=1e-10)

    def test_strong_proximity_keeps_posterior_mean(self):
        cost = TerminalCost(LinearExtractor([[1.0, 0.0]]), np.array([2.0]))
        x0_bar = np.array([0.1, 0.2])
        result = proximal_x0_solve(x0_bar, cost, SamplerConfig(stepsize=0.1, opt_steps=5, proximal_strength=1e12))
        assert_allclose(result, x0_bar, atol=1e-9)

    def test_never_differentiates_the_score(self, problem):
        schedule, score, cost = problem
        counting = CountingScoreModel(score)
        ModulatedSampler(counting, cost, schedule, benchmark_config()).run_algorithm2(seed=4)
        assert counting.jacobian_calls == 0
        assert counting.score_calls == 50

    def test_records_posterior_mean_correction(self, problem):
        trajectory = make_sampler(problem).run_algorithm2(seed=2)
        assert len(trajectory.controls) == 50
        assert all(np.any(u) for u in trajectory.controls)

    def test_requires_proximal_strength(self, problem):
        with pytest.raises(InvalidArgumentError):
            make_sampler(problem, proximal_strength=None).run_algorithm2(seed=0)
