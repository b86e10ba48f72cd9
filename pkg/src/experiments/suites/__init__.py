from src.experiments.suite_registry import SuiteRegistry
from src.experiments.suites.afa import AFASuite
from src.experiments.suites.diffusion_core import DiffusionCoreSuite
from src.experiments.suites.optimal_control import BridgeSuite, HJBSuite, ModulatedSuite, StyleLQSuite
from src.experiments.suites.soc_sampler import SamplerSuite
from src.experiments.suites.style_features import StyleFeaturesSuite

OPTIMAL_CONTROL_MEMBERS = ["bridge", "style-lq", "prop2", "hjb"]


def build_default_registry() -> SuiteRegistry:
    registry = SuiteRegistry()
    for suite in (DiffusionCoreSuite(), StyleFeaturesSuite(), BridgeSuite(), StyleLQSuite(), ModulatedSuite(),
                  HJBSuite(), SamplerSuite(), AFASuite()):
        registry.register_suite(suite)
    registry.register_group("optimal-control", "Bridge, linear style, drift-modulated and HJB checks.",
                            OPTIMAL_CONTROL_MEMBERS)
    registry.register_group("all", "Every verification suite.",
                            ["diffusion-core", "style-features", *OPTIMAL_CONTROL_MEMBERS, "soc-sampler", "afa"])
    return registry


__all__ = [
    "AFASuite",
    "BridgeSuite",
    "DiffusionCoreSuite",
    "HJBSuite",
    "ModulatedSuite",
    "SamplerSuite",
    "StyleFeaturesSuite",
    "StyleLQSuite",
    "build_default_registry",
]
