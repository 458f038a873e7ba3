import math

import numpy as np
import pytest

from dspike.core import WeightVector
from dspike.utils import derive_seed, format_params, l1_distance, mean_and_se, rmse


def test_version():
    import dspike

    assert hasattr(dspike, "__version__")
    assert isinstance(dspike.__version__, str)


def test_l1_distance_accepts_weight_vectors():
    a = WeightVector([0.5, 0.5, 0.0])
    assert l1_distance(a, [0.0, 0.5, 0.5]) == pytest.approx(1.0)
    assert l1_distance(a, a) == 0.0


def test_rmse():
    assert rmse([1.0, 2.0], [1.0, 4.0]) == pytest.approx(math.sqrt(2.0))
    assert math.isnan(rmse([], []))
    with pytest.raises(ValueError):
        rmse([1.0], [1.0, 2.0])


def test_derive_seed_is_stable_and_distinct():
    assert derive_seed(1, 2) == derive_seed(1, 2)
    seeds = {derive_seed(0, rep, cell) for rep in range(10) for cell in range(10)}
    assert len(seeds) == 100
    assert derive_seed(1, 2) != derive_seed(2, 1)
    assert 0 <= derive_seed(7) < 2 ** 32


def test_format_params():
    assert format_params({"rho1": 6.324555320336759, "theta": 0.025}) == "rho1=6.32456;theta=0.025"
    assert format_params({}) == ""


def test_mean_and_se():
    mean, se = mean_and_se([1.0, 2.0, 3.0])
    assert mean == 2.0
    assert se == pytest.approx(np.std([1.0, 2.0, 3.0], ddof=1) / math.sqrt(3))
    assert mean_and_se([4.0]) == (4.0, 0.0)
    assert all(math.isnan(v) for v in mean_and_se([]))
