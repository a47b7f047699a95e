import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# criterion -> list of (clause, passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, dict] = {}


@pytest.fixture(scope="session")
def acceptance():
    def record(number: int, title: str, clause: str, passed: bool, detail: str):
        entry = ACCEPTANCE.setdefault(number, {"title": title, "clauses": []})
        entry["clauses"].append((clause, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        entry = ACCEPTANCE[number]
        ok = all(c[1] for c in entry["clauses"])
        parts = "; ".join(f"{c[0]} {'ok' if c[1] else 'FAILED'} ({c[2]})" for c in entry["clauses"])
        terminalreporter.write_line(f"criterion {number} {entry['title']}: {'PASS' if ok else 'FAIL'}: {parts}")
