import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from vsgwm import autodiff as ad
from vsgwm.autodiff import Tensor
from vsgwm.distributions import (BernoulliVec, CategoricalLatent, DiagGaussian, MIN_STD,
                                 balanced_kl, bernoulli_gate_sample, bernoulli_kl,
                                 bernoulli_kl_elementwise, categorical_kl,
                                 categorical_sample_st, gaussian_kl, gaussian_kl_elementwise,
                                 gaussian_rsample)
from vsgwm.gradcheck import numeric_grad


def gauss(mean, std, grad=False):
    return DiagGaussian(Tensor(mean, requires_grad=grad), Tensor(std, requires_grad=grad))


def test_rsample_zero_noise_is_mean():
    d = gauss([1.5, -2.0], [0.7, 0.3])
    out = gaussian_rsample(d, np.zeros(2))
    np.testing.assert_array_equal(out.data, d.mean.data)


def test_rsample_tiny_std():
    eps = 1e-6
    noise = np.array([3.0, -2.0])
    with ad.default_dtype(np.float64):
        d = gauss([1.0, 2.0], [eps, eps])
        out = gaussian_rsample(d, noise)
    assert np.all(np.abs(out.data - d.mean.data) <= eps * np.abs(noise) + 1e-15)


def test_rsample_monte_carlo_mean():
    rng = np.random.Generator(np.random.Philox(0))
    d = gauss(np.ones(100_000), np.full(100_000, 0.5))
    out = gaussian_rsample(d, rng.standard_normal(100_000))
    assert abs(out.data.mean() - 1.0) < 0.01


def test_rsample_mean_gradient_is_identity():
    d = gauss([0.1, 0.2, 0.3], [1.0, 1.0, 1.0], grad=True)
    g = np.array([1.0, -2.0, 0.5], np.float32)
    ad.backward(gaussian_rsample(d, np.array([0.3, 0.1, -0.7])), grad=g)
    np.testing.assert_array_equal(d.mean.grad, g)


def test_from_raw_std_floor():
    raw = Tensor(np.array([[0.0, 0.0, -50.0, 3.0]]))
    d = DiagGaussian.from_raw(raw)
    assert d.mean.shape == (1, 2)
    assert np.all(d.std.data >= MIN_STD)
    assert d.std.data[0, 0] == pytest.approx(MIN_STD, abs=1e-6)


# -- Gaussian KL ------------------------------------------------------------

def test_gaussian_kl_examples():
    assert gaussian_kl(gauss([0.4], [0.9]), gauss([0.4], [0.9])).item() == 0.0
    assert gaussian_kl(gauss([0.0], [1.0]), gauss([1.0], [1.0])).item() == pytest.approx(0.5)


def test_gaussian_kl_quadrature():
    q, p = stats.norm(0.3, 0.8), stats.norm(0.0, 1.0)
    ref, _ = integrate.quad(lambda x: q.pdf(x) * (q.logpdf(x) - p.logpdf(x)), -12, 12,
                            epsabs=1e-12)
    with ad.default_dtype(np.float64):
        val = gaussian_kl(gauss([0.3], [0.8]), gauss([0.0], [1.0])).item()
    assert val == pytest.approx(ref, abs=1e-4)


def test_gaussian_kl_sums_dims_means_batch():
    rng = np.random.default_rng(0)
    with ad.default_dtype(np.float64):
        q = gauss(rng.standard_normal((3, 4, 5)), rng.uniform(0.2, 2, (3, 4, 5)))
        p = gauss(rng.standard_normal((3, 4, 5)), rng.uniform(0.2, 2, (3, 4, 5)))
        el = gaussian_kl_elementwise(q, p).data
        assert gaussian_kl(q, p).item() == pytest.approx(el.sum(-1).mean(), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_kls_nonnegative(seed):
    rng = np.random.default_rng(seed)
    q = gauss(rng.standard_normal(4), rng.uniform(0.1, 3, 4))
    p = gauss(rng.standard_normal(4), rng.uniform(0.1, 3, 4))
    assert gaussian_kl(q, p).item() >= -1e-6
    cq = CategoricalLatent(Tensor(rng.standard_normal((2, 3, 4))))
    cp = CategoricalLatent(Tensor(rng.standard_normal((2, 3, 4))))
    assert categorical_kl(cq, cp).item() >= -1e-6
    assert bernoulli_kl(Tensor(rng.uniform(0, 1, 6)), rng.uniform(0.05, 0.95)).item() >= -1e-6


# -- Bernoulli KL -----------------------------------------------------------

def test_bernoulli_kl_at_prior_is_zero():
    assert bernoulli_kl(Tensor([0.3]), 0.3).item() == pytest.approx(0.0, abs=1e-7)


def test_bernoulli_kl_direct_formula():
    q, k = 0.5, 0.3
    ref = q * np.log(q / k) + (1 - q) * np.log((1 - q) / (1 - k))
    with ad.default_dtype(np.float64):
        assert bernoulli_kl(Tensor([q]), k).item() == pytest.approx(ref, abs=1e-12)


def test_bernoulli_kl_decreases_towards_prior():
    k = 0.3
    with ad.default_dtype(np.float64):
        below = bernoulli_kl_elementwise(Tensor(np.linspace(0.01, k, 50)), k).data
        above = bernoulli_kl_elementwise(Tensor(np.linspace(0.99, k, 50)), k).data
    assert np.all(np.diff(below) < 0) and np.all(np.diff(above) < 0)
    assert below[-1] == pytest.approx(0.0, abs=1e-12)


def test_bernoulli_kl_gradient_only_to_probs():
    q = Tensor([0.5, 0.1], requires_grad=True)
    ad.backward(bernoulli_kl(q, 0.3))
    assert q.grad is not None and q.grad[0] > 0 > q.grad[1]


def test_bernoulli_clamp():
    b = BernoulliVec.from_probs(Tensor([0.0, 1.0, 0.5]))
    assert 0 < b.probs.data.min() and b.probs.data.max() < 1
    assert np.isfinite(bernoulli_kl(Tensor([0.0, 1.0]), 0.3).item())


# -- categorical ------------------------------------------------------------

def test_categorical_saturated_logits_deterministic():
    rng = np.random.Generator(np.random.Philox(1))
    logits = np.zeros((4, 3, 5))
    logits[..., 2] = 1e9
    out = categorical_sample_st(CategoricalLatent(Tensor(logits)), rng, unimix=0.0)
    assert out.shape == (4, 15)
    groups = out.data.reshape(4, 3, 5)
    assert np.all(groups[..., 2] == 1.0) and groups.sum() == 12


def test_categorical_one_hot_per_group():
    rng = np.random.Generator(np.random.Philox(2))
    c = CategoricalLatent(Tensor(rng.standard_normal((6, 4, 8))))
    g = categorical_sample_st(c, rng).data.reshape(6, 4, 8)
    assert set(np.unique(g)) <= {0.0, 1.0}
    np.testing.assert_array_equal(g.sum(-1), 1.0)


def test_categorical_uniform_frequency():
    rng = np.random.Generator(np.random.Philox(3))
    n, k = 100_000, 4
    c = CategoricalLatent(Tensor(np.zeros((n, 1, k))))
    counts = categorical_sample_st(c, rng).data.sum(0)
    sigma = np.sqrt(n * (1 / k) * (1 - 1 / k))
    assert np.all(np.abs(counts - n / k) < 3 * sigma)


def test_categorical_gradient_goes_to_probs():
    rng = np.random.Generator(np.random.Philox(4))
    logits = Tensor(np.random.default_rng(0).standard_normal((2, 3)), requires_grad=True)
    out = categorical_sample_st(CategoricalLatent(logits.reshape(1, 2, 3)), rng)
    ad.backward(ad.sum_(out * np.arange(6, dtype=np.float32)))
    assert logits.grad is not None and np.abs(logits.grad).sum() > 0


# -- balanced KL ------------------------------------------------------------

def test_balanced_kl_equal_inputs_zero_grad():
    q = gauss([0.2, -0.4], [0.6, 1.1], grad=True)
    p = gauss([0.2, -0.4], [0.6, 1.1], grad=True)
    val = balanced_kl(q, p)
    ad.backward(val)
    assert val.item() == pytest.approx(0.0, abs=1e-7)
    for t in (q.mean, q.std, p.mean, p.std):
        np.testing.assert_allclose(t.grad, 0.0, atol=1e-6)


@pytest.mark.parametrize("balance", [0.0, 0.3, 0.8, 1.0])
def test_balanced_kl_forward_equals_plain(balance):
    rng = np.random.default_rng(5)
    q = gauss(rng.standard_normal((3, 6)), rng.uniform(0.2, 2, (3, 6)))
    p = gauss(rng.standard_normal((3, 6)), rng.uniform(0.2, 2, (3, 6)))
    assert balanced_kl(q, p, balance).item() == pytest.approx(gaussian_kl(q, p).item(), abs=1e-6)


def test_balanced_kl_gradient_split():
    rng = np.random.default_rng(6)
    with ad.default_dtype(np.float64):
        q = gauss(rng.standard_normal(4), rng.uniform(0.3, 2, 4), grad=True)
        p = gauss(rng.standard_normal(4), rng.uniform(0.3, 2, 4), grad=True)
        ts = [q.mean, q.std, p.mean, p.std]
        ad.backward(balanced_kl(q, p, 0.8))
        got = [t.grad.copy() for t in ts]
        plain = numeric_grad(lambda: gaussian_kl(q, p), ts)
    for g, n, w in zip(got, plain, [0.2, 0.2, 0.8, 0.8]):
        np.testing.assert_allclose(g, w * n, rtol=1e-6, atol=1e-9)


def test_balanced_kl_family_mismatch():
    q = gauss([0.0], [1.0])
    c = CategoricalLatent(Tensor(np.zeros((1, 1, 2))))
    with pytest.raises(TypeError, match="famil"):
        balanced_kl(q, c)


def test_masked_kl_handcrafted_2x2():
    # two steps by two dims; the mask keeps step 0 dim 1 and step 1 dim 0 only
    with ad.default_dtype(np.float64):
        q = gauss([[0.5, -1.0], [0.2, 0.0]], [[1.0, 0.5], [2.0, 1.0]])
        p = gauss([[0.0, 0.0], [0.0, 1.0]], [[1.0, 1.0], [1.0, 0.5]])
        mask = np.array([[0.0, 1.0], [1.0, 0.0]])
        got = balanced_kl(q, p, mask=mask).item()

    def kl1(mq, sq, mp, sp):
        return np.log(sp / sq) + (sq ** 2 + (mq - mp) ** 2) / (2 * sp ** 2) - 0.5
    ref = (kl1(-1.0, 0.5, 0.0, 1.0) + kl1(0.2, 2.0, 0.0, 1.0)) / 2
    assert got == pytest.approx(ref, abs=1e-12)
    with ad.default_dtype(np.float64):
        assert balanced_kl(q, p, mask=np.zeros((2, 2))).item() == 0.0


# -- Bernoulli gates --------------------------------------------------------

def test_gate_sample_binary_and_saturated():
    rng = np.random.Generator(np.random.Philox(7))
    u = bernoulli_gate_sample(Tensor(np.full(1000, 1 - 1e-6)), rng)
    assert set(np.unique(u.data)) <= {0.0, 1.0}
    assert u.data.sum() == 1000


def test_gate_sample_rate():
    rng = np.random.Generator(np.random.Philox(8))
    u = bernoulli_gate_sample(Tensor(np.full(100_000, 0.3)), rng)
    assert abs(u.data.mean() - 0.3) < 0.01


def test_gate_sample_gradient_identity():
    rng = np.random.Generator(np.random.Philox(9))
    p = Tensor(np.full(5, 0.5), requires_grad=True)
    ad.backward(ad.sum_(bernoulli_gate_sample(p, rng)))
    np.testing.assert_array_equal(p.grad, np.ones(5))
