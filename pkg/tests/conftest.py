import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "ci", max_examples=50, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")

def pytest_terminal_summary(terminalreporter):
    import acceptance_recorder

    if acceptance_recorder.LINES:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_recorder.LINES:
            terminalreporter.write_line(line)


@pytest.fixture(autouse=True)
def _float32_default():
    from zrforge.numerics import set_default_dtype
    set_default_dtype(np.float32)
    yield
    set_default_dtype(np.float32)
