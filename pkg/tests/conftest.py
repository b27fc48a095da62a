import hashlib

import pytest

from plurinet.identity import Keypair, generate_keypair

# Lines recorded by the acceptance gate; replayed at the end of the run so
# each criterion's verdict is visible without -s.
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def keypair_for(label: str) -> Keypair:
    """Deterministic throwaway keypair — tests never depend on OS randomness."""
    return generate_keypair(hashlib.sha256(b"test-key:" + label.encode()).digest())


@pytest.fixture
def alice() -> Keypair:
    return keypair_for("alice")


@pytest.fixture
def bob() -> Keypair:
    return keypair_for("bob")


@pytest.fixture
def carol() -> Keypair:
    return keypair_for("carol")
