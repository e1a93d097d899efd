import zlib

import numpy as np
import pytest

import moscolab as ml


@pytest.fixture(scope="session")
def rect_mesh():
    return ml.generate_rectangle(0.125)


@pytest.fixture(scope="session")
def disk_mesh():
    return ml.generate_disk(0.12)


@pytest.fixture(scope="session")
def cracked_mesh():
    return ml.generate_cracked_disk(0.25, 0.1)


@pytest.fixture(scope="session")
def slit_mesh():
    # fully developed slit, the limit member of the cracked family
    return ml.generate_cracked_disk(0.0, 0.1)


@pytest.fixture(scope="session")
def hole_mesh():
    return ml.generate_fixed_hole(0.25, 0.1)


def rng_for(name, salt=0):
    # stable per-test seeds; avoids cross-test coupling through global state
    return np.random.default_rng(zlib.crc32(f"{name}:{salt}".encode()))
