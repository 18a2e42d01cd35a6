import numpy as np
import pytest

from matcon.piecewise import PiecewiseProcess


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def const(value, horizon=1.0):
    return PiecewiseProcess.constant(np.asarray(value, dtype=float), horizon)


def rand_proc(rng, shape, n_pieces, horizon, scale=1.0):
    bp = np.linspace(0.0, horizon, n_pieces + 1)
    return PiecewiseProcess(bp, scale * rng.standard_normal((n_pieces,) + tuple(shape)))
