import re

_VERDICTS: dict[str, list] = {}
_NAMES = {
    "1": "sampler composition",
    "2": "proportion probe",
    "3": "gradient check",
    "4": "mountaincar physics oracle",
    "5": "relabel soundness",
    "6": "schedule clamp",
    "7": "robo easy training trend",
    "8": "mountaincar training trend",
    "9": "determinism",
}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d)", report.nodeid)
    if not m:
        return
    if report.when == "call" or report.failed:
        entry = _VERDICTS.setdefault(m.group(1), [True, []])
        entry[0] = entry[0] and report.passed
        entry[1].extend(v for k, v in report.user_properties if k == "detail")


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_VERDICTS):
        ok, details = _VERDICTS[num]
        line = f"criterion {num} ({_NAMES[num]}): {'PASS' if ok else 'FAIL'}"
        if details:
            line += " - " + "; ".join(details)
        terminalreporter.write_line(line)
