import math
from typing import List

import numpy as np
from scipy import integrate

from src.diffusion.sampling import (
    ddim_step,
    flow_posterior_mean,
    reverse_drift,
    simulate_reverse,
    tweedie_posterior_mean,
)
from src.diffusion.schedules import FlowPath, OrnsteinUhlenbeckPath, VariancePreservingPath, linear_betas, make_schedule
from src.diffusion.score_models import GaussianMixture, IsotropicGaussian
from src.diffusion.types import DriftMode, NoiseSchedule
from src.experiments.base_suite import SuiteContext, VerificationSuite
from src.experiments.report import InvariantCheck

MIXTURE_WEIGHTS = (0.5, 0.5)
MIXTURE_MEANS = ((-2.0,), (2.0,))
MIXTURE_VARIANCE = 0.25


def mixture_posterior_mean_quadrature(x: float, scale: float, noise_std: float) -> float:
    """E[X0 | scale * X0 + noise_std * eps = x] for the 1-D test mixture, by quadrature."""

    def prior(x0: float) -> float:
        return sum(
            w * math.exp(-0.5 * (x0 - m[0]) ** 2 / MIXTURE_VARIANCE) / math.sqrt(2 * math.pi * MIXTURE_VARIANCE)
            for w, m in zip(MIXTURE_WEIGHTS, MIXTURE_MEANS)
        )

    def likelihood(x0: float) -> float:
        return math.exp(-0.5 * ((x - scale * x0) / noise_std) ** 2)

    bounds = (-12.0, 12.0)
    points = [m[0] for m in MIXTURE_MEANS]
    numerator, _ = integrate.quad(lambda x0: x0 * prior(x0) * likelihood(x0), *bounds, points=points,
                                  epsabs=1e-13, epsrel=1e-12, limit=200)
    denominator, _ = integrate.quad(lambda x0: prior(x0) * likelihood(x0), *bounds, points=points,
                                    epsabs=1e-13, epsrel=1e-12, limit=200)
    return numerator / denominator


class DiffusionCoreSuite(VerificationSuite):
    @property
    def name(self) -> str:
        return "diffusion-core"

    @property
    def description(self) -> str:
        return "Schedules, score consistency, posterior means, DDIM determinism, reverse-drift identities."

    def checks(self) -> List:
        return [
            self._schedule_cumprod,
            self._score_consistency,
            self._tweedie_gaussian,
            self._tweedie_mixture,
            self._flow_posterior_mixture,
            self._flow_remark_identity,
            self._ddim_determinism,
            self._marginal_preservation,
        ]

    def _schedule_cumprod(self, context: SuiteContext):
        schedule = make_schedule(1000, "linear-beta")
        product = 1.0
        for beta in linear_betas(1000):
            product *= 1.0 - float(beta)
        return [InvariantCheck.at_most("diffusion-core.schedule_cumprod_T1000",
                                       abs(schedule.alpha_bar[-1] - product), 1e-12)]

    def _score_consistency(self, context: SuiteContext):
        rng = np.random.default_rng(context.seed)
        schedule = make_schedule(50, "linear-beta")
        models = [
            IsotropicGaussian([0.5, -1.0], 2.0, VariancePreservingPath(schedule)),
            GaussianMixture([0.3, 0.7], [[-1.0, 0.0], [2.0, 1.0]], [0.5, 1.5], VariancePreservingPath(schedule)),
            GaussianMixture([0.5, 0.5], [[-2.0, 0.0], [2.0, 0.0]], [0.25, 0.25], OrnsteinUhlenbeckPath()),
        ]
        checks = []
        for model in models:
            worst = 0.0
            for _ in range(1000):
                t = float(rng.uniform(0.05, 0.95))
                x = rng.normal(0.0, 2.0, size=model.dimension)
                score = model.score(x, t)
                steps = 1e-5 * np.maximum(1.0, np.abs(x))
                numeric = np.empty_like(x)
                for i in range(x.shape[0]):
                    offset = np.zeros_like(x)
                    offset[i] = steps[i]
                    numeric[i] = (model.log_density(x + offset, t) - model.log_density(x - offset, t)) / (2 * steps[i])
                worst = max(worst, float(np.max(np.abs(numeric - score) / np.maximum(1.0, np.abs(score)))))
            checks.append(InvariantCheck.at_most(f"diffusion-core.score_consistency[{model.name}]", worst, 1e-5))
        return checks

    def _tweedie_gaussian(self, context: SuiteContext):
        rng = np.random.default_rng(context.seed + 1)
        schedule = make_schedule(50, "linear-beta")
        mean, variance = np.array([1.0, -2.0]), 0.5
        model = IsotropicGaussian(mean, variance, VariancePreservingPath(schedule))
        worst = 0.0
        for t in range(1, schedule.num_steps + 1):
            alpha_bar = schedule.at(t)
            x = rng.normal(size=2)
            gain = variance * math.sqrt(alpha_bar) / (alpha_bar * variance + 1.0 - alpha_bar)
            exact = mean + gain * (x - math.sqrt(alpha_bar) * mean)
            estimate = tweedie_posterior_mean(x, t, model, schedule)
            worst = max(worst, float(np.max(np.abs(estimate - exact))))
        return [InvariantCheck.at_most("diffusion-core.tweedie_gaussian_exact", worst, 1e-10)]

    def _tweedie_mixture(self, context: SuiteContext):
        schedule = NoiseSchedule.tabulated([1.0, 0.5])
        model = GaussianMixture(MIXTURE_WEIGHTS, MIXTURE_MEANS, [MIXTURE_VARIANCE] * 2, VariancePreservingPath(schedule))
        estimate = float(tweedie_posterior_mean(np.array([0.3]), 1, model, schedule)[0])
        oracle = mixture_posterior_mean_quadrature(0.3, math.sqrt(0.5), math.sqrt(0.5))
        return [InvariantCheck.within("diffusion-core.tweedie_mixture_quadrature", estimate, oracle, 1e-6)]

    def _flow_posterior_mixture(self, context: SuiteContext):
        model = GaussianMixture(MIXTURE_WEIGHTS, MIXTURE_MEANS, [MIXTURE_VARIANCE] * 2, FlowPath())
        t = 0.5
        estimate = float(flow_posterior_mean(np.array([0.3]), t, model)[0])
        oracle = mixture_posterior_mean_quadrature(0.3, 1.0 - t, t)
        return [InvariantCheck.within("diffusion-core.flow_posterior_mixture_quadrature", estimate, oracle, 1e-6)]

    def _flow_remark_identity(self, context: SuiteContext):
        rng = np.random.default_rng(context.seed + 2)
        model = GaussianMixture([0.4, 0.6], [[-1.0, 1.0], [1.5, -0.5]], [0.3, 0.8], FlowPath())
        t = 0.5
        worst = 0.0
        for _ in range(100):
            x = rng.uniform(-3.0, 3.0, size=2)
            drift = reverse_drift(x, t, model, DriftMode.FLOW_REMARK)
            identity = (flow_posterior_mean(x, t, model) - x) / (1.0 - t)
            worst = max(worst, float(np.max(np.abs(drift - identity))))
        return [InvariantCheck.at_most("diffusion-core.flow_remark_identity", worst, 1e-12)]

    def _ddim_determinism(self, context: SuiteContext):
        rng = np.random.default_rng(context.seed + 3)
        schedule = make_schedule(50, "cosine")
        x_t, x0_hat = rng.normal(size=4), rng.normal(size=4)
        first = ddim_step(x_t, x0_hat, 30, 29, schedule).values
        second = ddim_step(x_t.copy(), x0_hat.copy(), 30, 29, schedule).values
        mismatches = int(np.count_nonzero(first != second))
        return [InvariantCheck.at_most("diffusion-core.ddim_bit_determinism", mismatches, 0)]

    def _marginal_preservation(self, context: SuiteContext):
        rng = np.random.default_rng(context.seed + 4)
        num_runs, d = 100_000, 2
        model = IsotropicGaussian(np.zeros(d), 1.0, OrnsteinUhlenbeckPath())
        samples = simulate_reverse(rng.standard_normal((num_runs, d)), model, num_steps=500, rng=rng,
                                   mode=DriftMode.SDE)
        mean_error = float(np.max(np.abs(samples.mean(axis=0))))
        covariance = np.cov(samples, rowvar=False)
        diagonal_error = float(np.max(np.abs(np.diag(covariance) - 1.0)))
        off_diagonal = covariance[~np.eye(d, dtype=bool)]
        off_diagonal_error = float(np.max(np.abs(off_diagonal)))
        return [
            InvariantCheck.at_most("diffusion-core.marginal_mean", mean_error, 3.0 / math.sqrt(num_runs)),
            InvariantCheck.at_most("diffusion-core.marginal_variance", diagonal_error, 3.0 * math.sqrt(2.0 / num_runs)),
            InvariantCheck.at_most("diffusion-core.marginal_covariance", off_diagonal_error, 3.0 / math.sqrt(num_runs)),
        ]
