import math

import numpy as np
import pytest

from kgssl import autodiff as ad
from kgssl.autodiff import Adam, NumericError, Tensor, backward, grad_check, seeded_init


def test_square_gradient():
    x = Tensor(np.array(3.0), requires_grad=True)
    loss = ad.mul(x, x)
    backward(loss)
    assert x.grad == pytest.approx(6.0)


def test_sigmoid_sum_gradient_at_zero():
    # sigma'(0) = sigma(0) * (1 - sigma(0)) = 0.25 per element
    x = Tensor(np.zeros((2, 3)), requires_grad=True)
    loss = ad.total_sum(ad.sigmoid(x))
    backward(loss)
    assert np.allclose(x.grad, 0.25)


def test_matmul_identity():
    a = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]))
    eye = Tensor(np.eye(2))
    out = ad.matmul(a, eye)
    assert np.allclose(out.data, a.data)


def test_mean_matmul_matches_finite_differences():
    rng = np.random.Generator(np.random.PCG64(7))
    h = Tensor(rng.normal(size=(4, 3)).astype(np.float64))

    def f(w):
        return ad.mean(ad.matmul(w, h))

    w0 = Tensor(rng.normal(size=(5, 4)).astype(np.float64))
    assert grad_check(f, w0) < 1e-5


def test_backward_requires_scalar_and_attached_loss():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError, match="scalar"):
        backward(ad.relu(x))
    with pytest.raises(ValueError, match="detached"):
        backward(Tensor(np.array(1.0), requires_grad=True))


def test_gradients_accumulate_until_zero_grad():
    x = Tensor(np.array(2.0), requires_grad=True)
    for _ in range(2):
        backward(ad.mul(x, x))
    assert x.grad == pytest.approx(8.0)
    x.zero_grad()
    backward(ad.mul(x, x))
    assert x.grad == pytest.approx(4.0)


def test_shared_subexpression_accumulates():
    x = Tensor(np.array(1.5), requires_grad=True)
    y = ad.mul(x, x)           # x^2
    loss = ad.add(y, y)        # 2 x^2 -> d/dx = 4x
    backward(loss)
    assert x.grad == pytest.approx(6.0)


def test_broadcast_add_unbroadcasts_gradient():
    a = Tensor(np.zeros((3, 4)), requires_grad=True)
    b = Tensor(np.zeros((1, 4)), requires_grad=True)
    backward(ad.total_sum(ad.add(a, b)))
    assert a.grad.shape == (3, 4)
    assert b.grad.shape == (1, 4)
    assert np.allclose(b.grad, 3.0)


@pytest.mark.parametrize("name,f", [
    ("add", lambda x: ad.total_sum(ad.add(x, Tensor(np.ones(x.shape, dtype=np.float64))))),
    ("sub", lambda x: ad.total_sum(ad.sub(x, Tensor(np.full(x.shape, 0.3, dtype=np.float64))))),
    ("mul", lambda x: ad.total_sum(ad.mul(x, x))),
    ("div", lambda x: ad.total_sum(ad.div(x, Tensor(np.full(x.shape, 1.7, dtype=np.float64))))),
    ("scalar_mul", lambda x: ad.total_sum(ad.scalar_mul(x, -2.5))),
    ("relu", lambda x: ad.total_sum(ad.relu(x))),
    ("leaky_relu", lambda x: ad.total_sum(ad.leaky_relu(x))),
    ("sigmoid", lambda x: ad.total_sum(ad.sigmoid(x))),
    ("tanh", lambda x: ad.total_sum(ad.tanh(x))),
    ("exp", lambda x: ad.total_sum(ad.exp(x))),
    ("row_softmax", lambda x: ad.total_sum(ad.mul(ad.row_softmax(x), Tensor(_WEIGHT)))),
    ("row_log_softmax", lambda x: ad.total_sum(ad.mul(ad.row_log_softmax(x), Tensor(_WEIGHT)))),
    ("mean", lambda x: ad.mean(ad.mul(x, x))),
    ("l2_normalize_rows", lambda x: ad.total_sum(ad.mul(ad.l2_normalize_rows(x), Tensor(_WEIGHT)))),
])
def test_primitive_grad_checks(name, f):
    for seed in range(10):
        rng = np.random.Generator(np.random.PCG64(seed))
        x = Tensor(rng.normal(size=(4, 6)).astype(np.float64) + 0.1)
        assert grad_check(f, x) < 1e-5, name


_WEIGHT = np.arange(24, dtype=np.float64).reshape(4, 6) / 7.0


def test_log_grad_check_on_positive_inputs():
    for seed in range(10):
        rng = np.random.Generator(np.random.PCG64(seed))
        x = Tensor(rng.uniform(0.5, 3.0, size=(4, 6)))
        assert grad_check(lambda t: ad.total_sum(ad.log(t)), x) < 1e-5


def test_matmul_grad_check_both_sides():
    rng = np.random.Generator(np.random.PCG64(3))
    a0 = rng.normal(size=(3, 4))
    b0 = rng.normal(size=(4, 2))
    assert grad_check(lambda a: ad.total_sum(ad.matmul(a, Tensor(b0))), Tensor(a0)) < 1e-5
    assert grad_check(lambda b: ad.total_sum(ad.matmul(Tensor(a0), b)), Tensor(b0)) < 1e-5


def test_gather_scatter_pick_grad_checks():
    idx = np.array([0, 2, 2, 1])
    for seed in range(5):
        rng = np.random.Generator(np.random.PCG64(seed))
        x0 = rng.normal(size=(3, 5))
        assert grad_check(
            lambda x: ad.total_sum(ad.mul(ad.gather_rows(x, idx), Tensor(_W45))), Tensor(x0)
        ) < 1e-5
        y0 = rng.normal(size=(4, 5))
        assert grad_check(
            lambda y: ad.total_sum(ad.mul(ad.scatter_add_rows(y, idx, 3), Tensor(_W35))),
            Tensor(y0),
        ) < 1e-5
        assert grad_check(
            lambda x: ad.total_sum(ad.pick_per_row(x, np.array([1, 0, 4]))), Tensor(x0)
        ) < 1e-5


_W45 = np.arange(20, dtype=np.float64).reshape(4, 5) - 3.0
_W35 = np.arange(15, dtype=np.float64).reshape(3, 5) + 1.0


def test_concat_and_reshape_grad_checks():
    rng = np.random.Generator(np.random.PCG64(11))
    other = Tensor(rng.normal(size=(2, 5)))

    def f(x):
        joined = ad.concat([x, other], axis=0)
        return ad.total_sum(ad.mul(joined, joined))

    assert grad_check(f, Tensor(rng.normal(size=(3, 5)))) < 1e-5
    assert grad_check(
        lambda x: ad.total_sum(ad.mul(ad.reshape(x, (5, 3)), Tensor(_W53))),
        Tensor(rng.normal(size=(3, 5))),
    ) < 1e-5


_W53 = np.arange(15, dtype=np.float64).reshape(5, 3) * 0.25


class TestPairRotate:
    def test_zero_angle_is_identity(self):
        x = Tensor(np.arange(8, dtype=np.float32).reshape(2, 4))
        out = ad.pair_rotate(x, Tensor(np.zeros((2, 2))))
        assert np.allclose(out.data, x.data)

    def test_half_turn_negates_pair(self):
        x = Tensor(np.array([[1.0, 0.0]]))
        out = ad.pair_rotate(x, Tensor(np.array([[math.pi]])))
        assert np.allclose(out.data, [[-1.0, 0.0]], atol=1e-6)

    def test_preserves_pair_norm(self):
        rng = np.random.Generator(np.random.PCG64(5))
        x = rng.normal(size=(6, 8)).astype(np.float32)
        theta = rng.uniform(0, 2 * math.pi, size=(6, 4)).astype(np.float32)
        out = ad.pair_rotate(Tensor(x), Tensor(theta)).data
        for j in range(4):
            before = np.hypot(x[:, 2 * j], x[:, 2 * j + 1])
            after = np.hypot(out[:, 2 * j], out[:, 2 * j + 1])
            assert np.allclose(before, after, atol=1e-6)

    def test_inverse_rotation_round_trip(self):
        rng = np.random.Generator(np.random.PCG64(9))
        x = Tensor(rng.normal(size=(3, 6)).astype(np.float32))
        theta = Tensor(rng.uniform(0, 2 * math.pi, size=(3, 3)).astype(np.float32))
        neg = Tensor(-theta.data)
        back = ad.pair_rotate(ad.pair_rotate(x, theta), neg)
        assert np.allclose(back.data, x.data, atol=1e-6)

    def test_odd_last_dim_rejected(self):
        with pytest.raises(ValueError, match="even"):
            ad.pair_rotate(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 1))))

    def test_grad_check_inputs_and_angles(self):
        rng = np.random.Generator(np.random.PCG64(13))
        x0 = rng.normal(size=(3, 4))
        th0 = rng.uniform(0, 2 * math.pi, size=(3, 2))
        w = Tensor(np.arange(12, dtype=np.float64).reshape(3, 4))
        assert grad_check(
            lambda x: ad.total_sum(ad.mul(ad.pair_rotate(x, Tensor(th0)), w)), Tensor(x0)
        ) < 1e-5
        assert grad_check(
            lambda th: ad.total_sum(ad.mul(ad.pair_rotate(Tensor(x0), th), w)), Tensor(th0)
        ) < 1e-5

    def test_broadcast_angles_over_rows(self):
        x0 = np.random.Generator(np.random.PCG64(1)).normal(size=(5, 4))
        th0 = np.array([0.3, 1.2])
        w = Tensor(np.ones((5, 4)))
        assert grad_check(
            lambda th: ad.total_sum(ad.mul(ad.pair_rotate(Tensor(x0), th), w)), Tensor(th0)
        ) < 1e-5


class TestGradCheck:
    def test_sum_of_squares_self_test(self):
        rng = np.random.Generator(np.random.PCG64(2))
        x = Tensor(rng.normal(size=(3, 3)))
        assert grad_check(lambda t: ad.total_sum(ad.mul(t, t)), x) < 1e-7

    def test_constant_function_is_exactly_zero(self):
        const = Tensor(np.array(4.0))

        def f(x):
            return ad.add(ad.scalar_mul(ad.total_sum(x), 0.0), ad.mul(const, const))

        assert grad_check(f, Tensor(np.ones((2, 2)))) == 0.0

    def test_composition_chain_rule(self):
        def f(x):
            return ad.mean(ad.tanh(ad.matmul(ad.sigmoid(x), x)))

        rng = np.random.Generator(np.random.PCG64(21))
        assert grad_check(f, Tensor(rng.normal(size=(3, 3)))) < 1e-5


class TestSeededInit:
    def test_zeros(self):
        t = seeded_init((2, 2), "zeros", seed=0)
        assert not t.data.any()

    def test_glorot_bound(self):
        t = seeded_init((100, 100), "glorot-uniform", seed=1)
        bound = math.sqrt(6.0 / 200.0)
        assert np.abs(t.data).max() <= bound

    def test_unit_phases_range(self):
        t = seeded_init((50, 4), "unit-phases", seed=2)
        assert t.data.min() >= 0.0
        assert t.data.max() < 2 * math.pi

    def test_same_seed_identical_different_seed_differs(self):
        a = seeded_init((8, 8), "glorot-uniform", seed=42)
        b = seeded_init((8, 8), "glorot-uniform", seed=42)
        c = seeded_init((8, 8), "glorot-uniform", seed=43)
        assert a.data.tobytes() == b.data.tobytes()
        assert a.data.tobytes() != c.data.tobytes()

    def test_unknown_scheme_rejected(self):
        with pytest.raises(ValueError, match="scheme"):
            seeded_init((2,), "xavier", seed=0)


class TestAdam:
    def test_first_step_magnitude(self):
        # bias-corrected first step is ~lr * sign(g)
        p = Tensor(np.zeros(4, dtype=np.float32), requires_grad=True)
        p.grad = np.full(4, 0.5, dtype=np.float32)
        opt = Adam({"p": p}, lr=1e-3)
        opt.step()
        assert np.allclose(p.data, -1e-3, atol=1e-6)

    def test_zero_gradient_leaves_params_unchanged(self):
        p = Tensor(np.ones(3), requires_grad=True)
        p.grad = np.zeros(3, dtype=np.float32)
        opt = Adam({"p": p})
        before = p.data.copy()
        opt.step()
        assert np.array_equal(p.data, before)

    def test_deterministic_across_runs(self):
        def run():
            p = seeded_init((4, 4), "glorot-uniform", seed=5, requires_grad=True)
            opt = Adam({"w": p}, lr=1e-2)
            for step in range(10):
                p.zero_grad()
                backward(ad.total_sum(ad.mul(p, p)))
                opt.step()
            return p.data.tobytes()

        assert run() == run()

    def test_non_finite_gradient_aborts(self):
        p = Tensor(np.ones(2), requires_grad=True)
        p.grad = np.array([np.nan, 0.0], dtype=np.float32)
        with pytest.raises(NumericError, match="p"):
            Adam({"p": p}).step()
