import pytest

from physbus.modules import ModuleDescriptor, PhysicalVariableSpec


def descriptor(*variables: tuple[int, int, int], name: str = "test-module") -> ModuleDescriptor:
    """Build a descriptor from (min, max, granularity) triples."""
    return ModuleDescriptor(
        module_name=name,
        variables=tuple(
            PhysicalVariableSpec(
                name=f"var{i}", unit="", min=lo, max=hi, granularity=g, var_index=i
            )
            for i, (lo, hi, g) in enumerate(variables)
        ),
    )


@pytest.fixture
def make_descriptor():
    return descriptor


def pytest_runtest_logreport(report):
    """Print one pass/fail line per acceptance criterion."""
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.rsplit("::", 1)[-1].removeprefix("test_")
    outcome = "PASS" if report.passed else "FAIL"
    print(f"\nACCEPTANCE {name}: {outcome}", flush=True)
