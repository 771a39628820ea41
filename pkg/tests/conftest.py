import pytest

from relfactor.schema import build_database, parse_manifest


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import CRITERION_LINES
    except ImportError:
        return
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERION_LINES:
            terminalreporter.write_line(line)

TWO_TYPE_MANIFEST = """\
# users rate businesses
type user
type business
relation R user business
"""

RICH_MANIFEST = """\
type user
type business
type category
type word
relation R user business
relation C business category fully_observed
relation BW business word positives_only
relation UW user word positives_only
"""


@pytest.fixture
def simple_manifest():
    return parse_manifest(TWO_TYPE_MANIFEST)


@pytest.fixture
def rich_manifest():
    return parse_manifest(RICH_MANIFEST)


@pytest.fixture
def simple_db(simple_manifest):
    stream = [
        ("R", "u1", "b1", 1),
        ("R", "u1", "b2", 0),
        ("R", "u2", "b1", 1),
    ]
    return build_database(simple_manifest, stream)
