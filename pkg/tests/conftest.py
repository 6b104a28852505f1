import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import reference_library, REFERENCE_PREFIX  # noqa: E402

from symclf.expr import parse_prefix  # noqa: E402


@pytest.fixture(scope="session")
def ref_lib():
    return reference_library()


@pytest.fixture()
def ref_tree(ref_lib):
    """The 10-token reference expression over the fraud features."""
    return parse_prefix(REFERENCE_PREFIX, ref_lib)
