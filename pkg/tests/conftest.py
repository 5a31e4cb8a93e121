import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pcmeta.io import (
    load_bundled_records,
    partition_from_records,
    records_to_pvalues,
)


@pytest.fixture(scope="session")
def bundled_pvalue_records():
    return load_bundled_records("pvalues")


@pytest.fixture(scope="session")
def bundled_count_records():
    return load_bundled_records("counts")


@pytest.fixture(scope="session")
def bundled_pvalues(bundled_pvalue_records):
    return records_to_pvalues(bundled_pvalue_records)


@pytest.fixture(scope="session")
def bundled_groups(bundled_pvalue_records):
    return partition_from_records(bundled_pvalue_records)
