import pytest

from src.errors import InvalidArgumentError, UnknownSuiteError
from src.experiments.base_suite import SuiteContext, VerificationSuite
from src.experiments.report import InvariantCheck
from src.experiments.suites import OPTIMAL_CONTROL_MEMBERS, build_default_registry


class _Raising(VerificationSuite):
    name = "raising"
    description = "one good check, one that raises"

    def checks(self):
        def _good(context):
            return [InvariantCheck.at_most("raising.good", 0.5, 1.0)]

        def _bad(context):
            raise InvalidArgumentError("broken fixture")

        return [_good, _bad]


@pytest.fixture(scope="module")
def registry():
    return build_default_registry()


def test_registry_names(registry):
    assert set(registry.names()) == {
        "all", "optimal-control", "diffusion-core", "style-features", "bridge", "style-lq", "prop2", "hjb",
        "soc-sampler", "afa",
    }


def test_groups_list_their_members(registry):
    assert [member.name for member in registry.get_suite("optimal-control").members] == OPTIMAL_CONTROL_MEMBERS
    assert len(registry.get_suite("all").members) == 8


def test_unknown_suite_lists_known_names(registry):
    with pytest.raises(UnknownSuiteError) as info:
        registry.get_suite("bridges")
    assert "bridge" in str(info.value)


def test_raising_check_becomes_failed_entry():
    results = _Raising().run(SuiteContext())
    assert [result.passed for result in results] == [True, False]
    assert results[1].name == "raising.bad" and "broken fixture" in results[1].detail


def test_suite_info(registry):
    info = registry.get_suite("afa").get_suite_info()
    assert info["name"] == "afa" and info["checks"]


@pytest.mark.parametrize("name", ["bridge", "style-lq", "prop2", "hjb", "style-features", "afa"])
def test_fast_suites_pass(registry, name):
    results = registry.get_suite(name).run(SuiteContext(seed=0, threads=2))
    failures = [result for result in results if not result.passed and not result.advisory]
    assert results and not failures, failures


@pytest.mark.slow
@pytest.mark.parametrize("name", ["diffusion-core", "soc-sampler"])
def test_statistical_suites_pass(registry, name):
    results = registry.get_suite(name).run(SuiteContext(seed=0, threads=4))
    failures = [result for result in results if not result.passed and not result.advisory]
    assert results and not failures, failures


def test_afa_reads_shipped_branch_fixture(registry):
    results = registry.get_suite("afa").run(SuiteContext(seed=0))
    fixture = [result for result in results if result.name.startswith("afa.fixture")]
    assert [result.name for result in fixture] == [
        "afa.fixture_stylize_matches_explicit",
        "afa.fixture_compose_matches_explicit",
        "afa.fixture_convex_hull_violation",
    ]
    assert all(result.passed for result in fixture)


def test_afa_missing_fixture_is_a_failed_check(registry, tmp_path):
    results = registry.get_suite("afa").run(SuiteContext(params={"fixture_dir": str(tmp_path)}))
    fixture = [result for result in results if result.name.startswith("afa.fixture")]
    assert [result.name for result in fixture] == ["afa.fixture_branches"]
    assert not fixture[0].passed and str(tmp_path) in fixture[0].detail
