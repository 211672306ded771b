import numpy as np
import pytest

from quatfm.data import Batch, SparseInstance
from quatfm.gradients import (
    GradientBuffer,
    backward,
    finite_difference_gradient,
    forward_backward,
    gradient_errors,
    gradient_sweep,
    random_case,
    relative_error,
)
from quatfm.models import VariantConfig, init_params, scores

from conftest import random_instance, randomize

VARIANTS = [
    VariantConfig(),
    VariantConfig(interaction="dot_product"),
    VariantConfig(directionality="one_way"),
    VariantConfig(pooling="elementwise_real"),
    VariantConfig(residual=False),
]


class TestLinearGradients:
    @pytest.mark.parametrize("kind", ["fm", "qfm", "qnfm"])
    def test_bias_and_weights(self, rng, kind):
        params = randomize(init_params(kind, 10, 3, l=2), rng)
        inst = SparseInstance((1, 4, 7), (0.5, 2.0, 1.5), 1)
        grads = backward(params, inst).mean()
        assert float(grads.w0) == 1.0
        expected = np.zeros(10)
        expected[[1, 4, 7]] = [0.5, 2.0, 1.5]
        np.testing.assert_array_equal(grads.w, expected)

    def test_inactive_rows_zero(self, rng):
        params = randomize(init_params("qnfm", 10, 3, l=1), rng)
        grads = backward(params, SparseInstance((2, 3), (1.0, 1.0), 0)).grads
        mask = np.ones(10, dtype=bool)
        mask[[2, 3]] = False
        assert np.all(grads.M[:, mask] == 0.0)


class TestFiniteDifference:
    def test_linear_exact(self, rng):
        params = randomize(init_params("qfm", 6, 2), rng)
        inst = SparseInstance((3,), (1.7,), 0)
        assert finite_difference_gradient(params, inst, ("w", 3)) == pytest.approx(1.7, abs=1e-9)

    def test_quadratic(self):
        # FM with one pair of equal embeddings: y = x1 x2 theta^2 on V[0,0] = V[1,0] = theta.
        params = init_params("fm", 2, 1)
        params.V[:] = 3.0
        inst = SparseInstance((0, 1), (1.0, 1.0), 0)
        fd = finite_difference_gradient(params, inst, ("V", 0))
        assert fd == pytest.approx(3.0, abs=1e-8)

    def test_bad_coordinate(self):
        params = init_params("fm", 2, 1)
        inst = SparseInstance((0,), (1.0,), 0)
        with pytest.raises(IndexError):
            finite_difference_gradient(params, inst, ("V", 2))
        with pytest.raises(IndexError):
            finite_difference_gradient(params, inst, ("M", 0))
        with pytest.raises(ValueError):
            finite_difference_gradient(params, inst, ("w", 0), h=0.0)

    def test_relative_error(self):
        assert relative_error(0.0, 0.0) == 0.0
        assert relative_error(1.0, 0.5) == 0.5


class TestAnalyticVsNumeric:
    @pytest.mark.parametrize("kind", ["fm", "qfm", "qnfm"])
    @pytest.mark.parametrize("variant", VARIANTS)
    def test_single_case(self, rng, kind, variant):
        params, inst = random_case(kind, rng, n=10, d=3, l=2, nnz=4, variant=variant)
        for group, (rel, ab) in gradient_errors(params, inst, variant).items():
            assert rel < 1e-4, group
            assert ab < 1e-7, group

    def test_sweep_report(self):
        report = gradient_sweep("qfm", cases=3, seed=1)
        assert report.passed and report.cases == 3
        assert set(report.worst_rel) == {"w0", "w", "M"}
        assert all(line.endswith("ok") for line in report.lines())

    def test_report_flags_failure(self):
        report = gradient_sweep("fm", cases=2, seed=1, rel_tol=0.0)
        assert not report.passed


class TestBatches:
    @pytest.mark.parametrize("kind", ["fm", "qfm", "qnfm"])
    def test_batch_is_sum_of_instances(self, rng, kind):
        params = randomize(init_params(kind, 15, 4, l=2), rng)
        insts = [random_instance(rng, 15, int(k)) for k in rng.integers(1, 6, size=8)]
        upstream = rng.normal(size=8)
        batch_grads = backward(params, Batch.from_instances(insts), upstream).grads
        total = GradientBuffer.zeros(params)
        for u, inst in zip(upstream, insts):
            total.add(backward(params, inst, u))
        assert total.count == 8
        for name, arr in batch_grads.arrays().items():
            np.testing.assert_allclose(arr, total.grads.arrays()[name], rtol=1e-10, atol=1e-12)

    def test_mean(self, rng):
        params = randomize(init_params("qfm", 8, 2), rng)
        insts = [random_instance(rng, 8, 3) for _ in range(4)]
        buf = GradientBuffer.zeros(params)
        for inst in insts:
            buf.add(backward(params, inst))
        np.testing.assert_allclose(buf.mean().M, buf.grads.M / 4)

    def test_zero_upstream(self, rng):
        params = randomize(init_params("qnfm", 8, 3, l=2), rng)
        grads = backward(params, random_instance(rng, 8, 4), 0.0).grads
        assert all(np.all(a == 0.0) for a in grads.arrays().values())

    def test_callable_upstream(self, rng):
        params = randomize(init_params("qfm", 8, 3), rng)
        batch = Batch.from_instances([random_instance(rng, 8, 3) for _ in range(5)])
        y, g1 = forward_backward(params, batch, lambda s: 2.0 * s)
        np.testing.assert_allclose(y, scores(params, batch))
        _, g2 = forward_backward(params, batch, 2.0 * y)
        np.testing.assert_array_equal(g1.M, g2.M)


class TestTrainMode:
    def test_missing_rng(self, rng):
        params = randomize(init_params("qnfm", 8, 3, l=1), rng)
        with pytest.raises(ValueError):
            backward(params, random_instance(rng, 8, 3), mode="train", rho=0.3)

    def test_bad_mode(self, rng):
        params = init_params("qfm", 8, 3)
        with pytest.raises(ValueError):
            backward(params, random_instance(rng, 8, 3), mode="test")

    def test_rng_replay(self, rng):
        params = randomize(init_params("qnfm", 8, 6, l=2), rng)
        inst = random_instance(rng, 8, 4)
        a = backward(params, inst, mode="train", rng=np.random.default_rng(5), rho=0.4).grads
        b = backward(params, inst, mode="train", rng=np.random.default_rng(5), rho=0.4).grads
        c = backward(params, inst, mode="eval", rho=0.4).grads
        for name in a.arrays():
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
        assert not np.array_equal(a.W, c.W)

    def test_dropout_gradient_matches_masked_forward(self, rng):
        # With the mask fixed, train-mode output is differentiable; compare against FD on it.
        params = randomize(init_params("qnfm", 8, 4, l=1), rng)
        inst = random_instance(rng, 8, 4)
        batch = Batch.single(inst)
        seed = 11
        _, grads = forward_backward(params, batch, 1.0, train=True, rho=0.3, rng=np.random.default_rng(seed))
        h = 1e-6
        for coord in [("p", 1), ("W", 5), ("M", int(inst.indices[0]) * 4 + 2)]:
            probe = params.copy()
            base = probe.get(coord)
            probe.set(coord, base + h)
            up = scores(probe, batch, train=True, rho=0.3, rng=np.random.default_rng(seed))[0]
            probe.set(coord, base - h)
            down = scores(probe, batch, train=True, rho=0.3, rng=np.random.default_rng(seed))[0]
            assert grads.get(coord) == pytest.approx((up - down) / (2 * h), rel=1e-5, abs=1e-8)
