import numpy as np
import pytest

from rhmpc.errors import DimensionError
from rhmpc.grid import ControlGrid


def test_uniform_breakpoints():
    g = ControlGrid.uniform(0.0, 10.0, np.zeros((5, 2)))
    np.testing.assert_allclose(g.breakpoints, [0, 2, 4, 6, 8, 10])
    assert (g.N, g.n_u, g.span) == (5, 2, (0.0, 10.0))


def test_one_dimensional_values_become_a_column():
    g = ControlGrid.uniform(0.0, 1.0, [1.0, 2.0])
    assert g.values.shape == (2, 1)


def test_invalid_breakpoints():
    with pytest.raises(ValueError):
        ControlGrid(np.array([0.0, 1.0, 1.0]), np.zeros((2, 1)))
    with pytest.raises(DimensionError):
        ControlGrid(np.array([0.0, 1.0]), np.zeros((2, 1)))


def test_value_lookup_and_right_end():
    g = ControlGrid.uniform(0.0, 2.0, [[1.0], [5.0]])
    assert g.value_at(0.0)[0] == 1.0
    assert g.value_at(1.0)[0] == 5.0
    assert g.value_at(2.0)[0] == 5.0


def test_shift_drops_first_and_repeats_last():
    g = ControlGrid.uniform(0.0, 3.0, [[1.0], [2.0], [3.0]])
    np.testing.assert_array_equal(g.shifted().values.ravel(), [2.0, 3.0, 3.0])
