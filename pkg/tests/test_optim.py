import numpy as np
import pytest

from voxelforge.errors import ShapeMismatchError
from voxelforge.network.optim import OptimState, one_cycle_lr, sgd_momentum_step


class TestSchedule:
    @pytest.mark.parametrize(
        "epoch,lr", [(0, 0.01), (10, 0.1), (20, 0.01), (30, 0.0005), (5, 0.055), (25, 0.00525), (45, 0.0005)]
    )
    def test_values(self, epoch, lr):
        assert one_cycle_lr(epoch) == pytest.approx(lr, rel=1e-12)

    def test_negative(self):
        with pytest.raises(ValueError):
            one_cycle_lr(-0.1)

    def test_piecewise_linear(self):
        e = np.linspace(0, 30, 3001)
        lr = np.array([one_cycle_lr(x) for x in e])
        second = np.diff(lr, 2)
        kinks = np.nonzero(np.abs(second) > 1e-12)[0] + 1
        assert set(np.round(e[kinks]).astype(int)) <= {10, 20}


class TestSgd:
    def test_zero_everything(self):
        p = [np.array([1.0, -2.0])]
        sgd_momentum_step(p, [np.zeros(2)], OptimState(weight_decay=0.0), 0.1)
        np.testing.assert_array_equal(p[0], [1.0, -2.0])

    def test_one_step(self):
        theta = np.array([0.5, -1.5, 2.0])
        g = np.array([0.1, 0.2, -0.3])
        p = [theta.copy()]
        sgd_momentum_step(p, [g], OptimState(), 0.05)
        np.testing.assert_allclose(p[0], theta - 0.05 * (g + 0.0005 * theta), rtol=0, atol=1e-15)

    def test_momentum(self):
        p = [np.zeros(1)]
        st = OptimState(weight_decay=0.0)
        for _ in range(2):
            sgd_momentum_step(p, [np.ones(1)], st, 1.0)
        # v1 = -1, v2 = 0.9 * -1 - 1
        assert p[0][0] == pytest.approx(-1 - 1.9)

    def test_quadratic_bowl(self):
        rng = np.random.default_rng(0)
        a = np.diag(rng.uniform(0.5, 2.0, 5))
        opt = rng.standard_normal(5)
        p = [np.zeros(5)]
        st = OptimState(weight_decay=0.0)
        for step in range(500):
            sgd_momentum_step(p, [a @ (p[0] - opt)], st, 0.1)
            if np.linalg.norm(p[0] - opt) < 1e-8:
                break
        assert np.linalg.norm(p[0] - opt) < 1e-8 and step < 500

    def test_errors(self):
        with pytest.raises(ValueError):
            sgd_momentum_step([np.zeros(2)], [np.zeros(2)], OptimState(), 0.0)
        with pytest.raises(ShapeMismatchError):
            sgd_momentum_step([np.zeros(2)], [np.zeros(3)], OptimState(), 0.1)
        with pytest.raises(ShapeMismatchError):
            sgd_momentum_step([np.zeros(2)], [], OptimState(), 0.1)
