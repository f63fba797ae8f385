"""One-line outcomes of the acceptance criteria, printed by ``conftest.py``."""

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_acceptance(number: int, ok: bool, text: str) -> None:
    ACCEPTANCE[number] = (ok, text)
