from hypothesis import settings

# The suite shares a box with training jobs; wall-clock deadlines only flake.
settings.register_profile("ci", deadline=None)
settings.load_profile("ci")

# One line per acceptance criterion, printed after the run so the verdicts
# survive pytest's output capture.
acceptance_results: list[str] = []


def record_criterion(number: int, description: str, passed: bool) -> None:
    verdict = "PASS" if passed else "FAIL"
    acceptance_results.append(f"criterion {number:2d} [{verdict}] {description}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(acceptance_results):
        terminalreporter.write_line(line)
