import pytest

from artifact.envs import true_model_set

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def true_sets():
    """True model sets of the deterministic toy worlds, built once."""
    cache = {}

    def get(name: str, k: int, depth: int = 4):
        if (name, k, depth) not in cache:
            cache[name, k, depth] = true_model_set(name, k, depth)
        return cache[name, k, depth]

    return get


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda text: int(text.split()[1])):
            terminalreporter.write_line(line)
