import numpy as np
import pytest

from rendertime import tfcam, volcore


@pytest.fixture(scope="session")
def shell_volume():
    vol, meta = volcore.gen_synthetic(3, (64, 64, 64), "shell")
    return vol, meta


@pytest.fixture(scope="session")
def blobs_volume():
    vol, meta = volcore.gen_synthetic(1, (32, 32, 32), "blobs")
    return vol, meta


@pytest.fixture
def narrow_tf():
    # narrow high lobe away from zero: empty space stays empty under the LUT
    return tfcam.TransferFunction(((0.8, 0.01, 0.9),))


@pytest.fixture
def saturating_tf():
    # full-magnitude lobe so rays terminate at exactly A = 1
    return tfcam.TransferFunction(((0.6, 0.05, 1.0),))


@pytest.fixture
def default_pose():
    return tfcam.CameraPose(30.0, 20.0, 2.0)
