"""Pass/fail lines from the acceptance suite, echoed in the terminal summary."""

LINES: list[str] = []


def record(criterion: str, ok: bool, detail: str) -> bool:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
    LINES.append(line)
    print(line)
    return ok


def skip(criterion: str, reason: str) -> None:
    line = f"[SKIP] criterion {criterion}: {reason}"
    LINES.append(line)
    print(line)
