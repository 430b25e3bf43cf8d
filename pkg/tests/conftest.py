import pytest
from hypothesis import settings

from smscoach.config import parse_config
from smscoach.engine import run_experiment

settings.register_profile("repo", deadline=None)
settings.load_profile("repo")

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(passed), detail)
    print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def small_config(seed: int = 1, **overrides):
    """Six weeks, early switch, so a run exercises both policy modes in about a second."""
    data = {
        "seed": seed,
        "horizon_weeks": 6,
        "policy": {"switch_threshold": 200},
    }
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(data.get(key), dict):
            data[key] = {**data[key], **value}
        else:
            data[key] = value
    return parse_config(data)


@pytest.fixture(scope="session")
def small_run():
    return run_experiment(small_config())


@pytest.fixture(scope="session")
def small_written(small_run, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    log_path, models_path = small_run.write(out)
    return log_path, models_path
