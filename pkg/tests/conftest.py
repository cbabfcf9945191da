import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pansharp.raster import MultiBandImage

settings.register_profile("ci", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def img(a, **kw) -> MultiBandImage:
    a = np.asarray(a, dtype=np.float64)
    return MultiBandImage(a[None] if a.ndim == 2 else a, **kw)


# acceptance verdicts, printed once at the end of the run ------------------------

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def verdict():
    """``verdict(n, ok, detail)`` records the outcome of acceptance criterion ``n``."""
    def record(n: int, ok: bool, detail: str) -> None:
        ACCEPTANCE[n] = (bool(ok), detail)
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
