"""Shared fixtures: bundled networks, derived constants, solve helpers."""

import pytest

from otsqc import netparse, prep


def _load(name: str) -> netparse.Network:
    return netparse.load_case(netparse.bundled_case_path(name))


@pytest.fixture(scope="session")
def case3():
    return _load("case3_lmbd")


@pytest.fixture(scope="session")
def case3_sad():
    return _load("case3_lmbd__sad")


@pytest.fixture(scope="session")
def case5():
    return _load("case5_pjm")


@pytest.fixture(scope="session")
def case14():
    return _load("case14_ieee")


@pytest.fixture(scope="session")
def case14_sad():
    return _load("case14_ieee__sad")


@pytest.fixture(scope="session")
def case3_constants(case3):
    return prep.derive_line_constants(case3)


@pytest.fixture(scope="session")
def case5_constants(case5):
    return prep.derive_line_constants(case5)


@pytest.fixture(scope="session")
def case14_constants(case14):
    return prep.derive_line_constants(case14)
