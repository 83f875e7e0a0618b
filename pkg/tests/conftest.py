import pytest

from tsepdm import plant


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    import sys

    for name, module in list(sys.modules.items()):
        if name.rpartition(".")[2] == "test_acceptance" and getattr(module, "RESULTS", None):
            terminalreporter.section("acceptance criteria")
            for line in module.RESULTS:
                terminalreporter.write_line(line)
            break


@pytest.fixture(scope="session")
def prototype():
    return plant.DEFAULT_PARAMS


@pytest.fixture(scope="session")
def full_power_trace(prototype):
    """3 ms co-simulation at full density on both sides, with samples."""
    from tsepdm.modulator import PulseDensityModulator
    from tsepdm.ntf import build_first_order

    cfg = plant.SimConfig(duration=3e-3, collect_samples=True)
    return plant.simulate(prototype, cfg,
                          PulseDensityModulator(build_first_order()),
                          PulseDensityModulator(build_first_order()),
                          1.0, 1.0)
