from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"

LOSS_QUESTION = (
    "What is the dollar value (in thousands) of foreign currency translation for the year 2013?"
)


@pytest.fixture
def loss_html() -> str:
    return (FIXTURES / "comprehensive_loss.html").read_text(encoding="utf-8")


@pytest.fixture
def echo_answerer() -> Path:
    return FIXTURES / "echo_answerer.py"


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(ident, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(report, "user_properties", []))
            if "acceptance" in props and report.when == "call":
                status = "PASS" if outcome == "passed" else "FAIL"
                detail = f" [{props['detail']}]" if "detail" in props else ""
                lines.append(f"{status} {props['acceptance']}{detail}")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: s.split()[1]):
            terminalreporter.line(line)
