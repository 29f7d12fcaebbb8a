import pytest

from nsym.catalog import DATA, load_generators, load_system


@pytest.fixture(scope="session")
def nls():
    return load_system("nls")


@pytest.fixture(scope="session")
def mkdv():
    return load_system("mkdv")


@pytest.fixture(scope="session")
def nls_real():
    return load_system("nls-real")


@pytest.fixture(scope="session")
def gens():
    return load_generators


@pytest.fixture(scope="session")
def data_dir():
    return DATA


# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
