import pytest


@pytest.fixture
def announce(capsys):
    """Print one un-captured PASS/FAIL line per acceptance check."""

    def _announce(index: int, slug: str, ok: bool, detail: str = "") -> None:
        line = f"ACCEPTANCE {index} {slug}: " + ("PASS" if ok else "FAIL")
        if detail:
            line += f" ({detail})"
        with capsys.disabled():
            print(line, flush=True)

    return _announce
