import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from schedprice.calendar import DayOfWeek, LeadTimeCalendar
from schedprice.mnl import MnlParams, single_bucket_map


@pytest.fixture
def toy_calendar() -> LeadTimeCalendar:
    """The worked 7-option Sunday-to-Saturday example."""
    return LeadTimeCalendar(7, DayOfWeek.SUNDAY)


@pytest.fixture
def toy_prices() -> np.ndarray:
    return np.array([10.0, 11.0, 9.0, 12.0, 12.0, 10.0, 8.0])


@pytest.fixture
def toy_params() -> MnlParams:
    return MnlParams(
        alpha=(0.0, 0.0, 0.0),
        beta=(0.10,),
        gamma=(0.05,),
        bucket_map=single_bucket_map(7),
    )
