import numpy as np
import pytest

from handwash.synthgen import ResponseParams, Scenario, generate_dataset


@pytest.fixture(scope="session")
def small_scenario():
    return Scenario(n_participants=3, washes_per_participant=2, session_s=1800.0, seed=1)


@pytest.fixture(scope="session")
def small_dataset(small_scenario):
    return generate_dataset(small_scenario, ResponseParams(), seed=0)


@pytest.fixture(scope="session")
def default_dataset():
    return generate_dataset(Scenario(), ResponseParams(), seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria report: one line per criterion in the terminal summary
_VERDICTS: dict[int, list[list]] = {}


@pytest.fixture
def verdict(request):
    parts = []

    def record(criterion: int, ok: bool | None, detail: str):
        # ok=None marks a criterion skipped for lack of inputs
        part = [ok if ok is None else bool(ok), detail]
        _VERDICTS.setdefault(criterion, []).append(part)
        parts.append(part)
        print(f"criterion {criterion}: {_word(part[0])} {detail}")
        return ok

    yield record
    rep = getattr(request.node, "rep_call", None)
    if rep is not None and rep.failed:
        for part in parts:
            part[0] = False


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    rep = yield
    if rep.when == "call":
        item.rep_call = rep
    return rep


def _word(ok):
    return "SKIP" if ok is None else ("PASS" if ok else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(_VERDICTS):
        parts = _VERDICTS[c]
        states = [p[0] for p in parts]
        ok = None if all(s is None for s in states) else all(s is not False for s in states)
        detail = "; ".join(p[1] for p in parts)
        terminalreporter.write_line(f"criterion {c}: {_word(ok)}  {detail}")
