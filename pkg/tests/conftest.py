"""Shared test plumbing.

The acceptance tests register their verdicts here so that one
``ACCEPTANCE <n> <name>: PASS/FAIL`` line per criterion is printed in the
terminal summary regardless of output capturing.
"""

ACCEPTANCE_RESULTS: dict[int, tuple[str, bool]] = {}


def record_acceptance(number: int, name: str, ok: bool) -> None:
    ACCEPTANCE_RESULTS[number] = (name, bool(ok))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_line("")
    for number in sorted(ACCEPTANCE_RESULTS):
        name, ok = ACCEPTANCE_RESULTS[number]
        verdict = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"ACCEPTANCE {number} {name}: {verdict}")
