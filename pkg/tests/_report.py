"""Collects one pass/fail line per acceptance criterion for the terminal summary."""

LINES: list[str] = []


def report(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    LINES.append(line)
    print(line)
