from typing import List

from src.custom_logging import logger
from src.errors import UnknownSuiteError
from src.experiments.base_suite import SuiteContext, VerificationSuite
from src.experiments.report import InvariantCheck


class SuiteGroup(VerificationSuite):
    """Runs other registered suites in order (e.g. "optimal-control", "all")."""

    def __init__(self, name: str, description: str, members: List[VerificationSuite]):
        self._name = name
        self._description = description
        self.members = members

    @property
    def name(self) -> str:
        return self._name

    @property
    def description(self) -> str:
        return self._description

    def checks(self):
        return [check for member in self.members for check in member.checks()]

    def run(self, context: SuiteContext) -> list[InvariantCheck]:
        results = []
        for member in self.members:
            results.extend(member.run(context))
        return results


class SuiteRegistry:
    def __init__(self):
        self._suites: dict[str, VerificationSuite] = {}

    def register_suite(self, suite: VerificationSuite):
        if suite.name in self._suites:
            logger.warning(f"Suite '{suite.name}' is already registered. Overwriting.")
        self._suites[suite.name] = suite
        logger.debug(f"Suite '{suite.name}' registered.")

    def register_group(self, name: str, description: str, member_names: List[str]) -> SuiteGroup:
        group = SuiteGroup(name, description, [self.get_suite(member) for member in member_names])
        self.register_suite(group)
        return group

    def get_suite(self, suite_name: str) -> VerificationSuite:
        suite = self._suites.get(suite_name)
        if suite is None:
            raise UnknownSuiteError(f"unknown suite '{suite_name}' (known: {', '.join(self.names())})")
        return suite

    def names(self) -> list[str]:
        return sorted(self._suites)

    def get_all_suites_info(self, suites: List[str] = None) -> list[dict]:
        if suites:
            return [self._suites[name].get_suite_info() for name in suites if name in self._suites]
        return [suite.get_suite_info() for suite in self._suites.values()]
