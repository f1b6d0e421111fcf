import pytest

from blendlstm.featsel import identity_mask
from blendlstm.names import ARKIT_BLENDSHAPE_NAMES


@pytest.fixture
def full_mask():
    return identity_mask(ARKIT_BLENDSHAPE_NAMES)
