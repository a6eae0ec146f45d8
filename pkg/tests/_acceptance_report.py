"""Shared registry so the acceptance results print as a summary block."""

RESULTS = []


def record(criterion: str, passed: bool, detail: str) -> None:
    RESULTS.append((criterion, passed, detail))


def check(criterion: str, passed: bool, detail: str) -> None:
    record(criterion, passed, detail)
    assert passed, f"{criterion} FAIL: {detail}"
