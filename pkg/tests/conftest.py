import pytest

from eocavity.core import paper_device
from eocavity.optical import device_stack
from eocavity.transduction import LockedCavity, mode_triplet, target_microwave_mode, tune_triple_resonance

# lines reported by the acceptance module, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def device():
    return paper_device()


@pytest.fixture(scope="session")
def target_mode(device):
    return target_microwave_mode(device)


@pytest.fixture(scope="session")
def tuned(device):
    return tune_triple_resonance(device)


@pytest.fixture(scope="session")
def tuned_cavity(device, tuned):
    stack = device_stack(device, tuned.l_air)
    return LockedCavity(stack, *mode_triplet(stack, tuned.pump_index, device.input_side))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
