import pytest

_VERDICTS = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    criterion = getattr(item.function, "criterion", None)
    if criterion is None or rep.when != "call":
        return
    detail = dict(item.user_properties).get("detail", "")
    _VERDICTS[criterion] = ("PASS" if rep.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_VERDICTS):
        verdict, detail = _VERDICTS[key]
        terminalreporter.write_line(f"{key} {verdict}  {detail}")
