import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

# criterion number -> title, and the outcomes of the tests that check it
_TITLES: dict[int, str] = {}
_OUTCOMES: dict[int, list[tuple[str, str, list[str]]]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        num, title = mark.args
        _TITLES[num] = title
        if hasattr(rep, "wasxfail"):
            status = "xfail"
        else:
            status = rep.outcome
        notes = [str(v) for k, v in item.user_properties if k == "note"]
        if status == "xfail":
            notes.append(f"known failure: {rep.wasxfail}")
        _OUTCOMES.setdefault(num, []).append((item.name, status, notes))


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(_OUTCOMES):
        results = _OUTCOMES[num]
        ok = all(s == "passed" for _, s, _ in results)
        tr.write_line(f"criterion {num:>2} [PRIMARY] {_TITLES[num]}: {'PASS' if ok else 'FAIL'}")
        for name, status, notes in results:
            if status != "passed" or notes:
                for n in notes or [status]:
                    tr.write_line(f"    {name}: {n}")
