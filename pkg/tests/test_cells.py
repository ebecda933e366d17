import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vsgwm import autodiff as ad
from vsgwm.autodiff import Tensor
from vsgwm.cells import (GRUCell, SSMCell, SVSGCell, VSGCell, gru_step, ssm_step, svsg_step,
                         vsg_step)
from vsgwm.gradcheck import check_gradients

import helpers


def philox(seed):
    return np.random.Generator(np.random.Philox(seed))


def inputs(rng, b=3, d=4, n=5):
    return Tensor(rng.uniform(-1, 1, (b, d))), Tensor(rng.uniform(-1, 1, (b, n)))


def gru_oracle(cell, h, x):
    """Scalar-loop reference for one GRU step."""
    def affine(lin, vec, j):
        return sum(vec[k] * lin.weight.data[k, j] for k in range(len(vec))) + lin.bias.data[j]
    out = np.zeros_like(h)
    for b in range(h.shape[0]):
        hx = list(h[b]) + list(x[b])
        for j in range(h.shape[1]):
            v = 1 / (1 + np.exp(-affine(cell.W_v, hx, j)))
            u = 1 / (1 + np.exp(-affine(cell.W_u, hx, j)))
            c = np.tanh(v * affine(cell.W_c, hx, j))
            out[b, j] = u * c + (1 - u) * h[b, j]
    return out


def test_gru_matches_scalar_oracle():
    rng = np.random.default_rng(0)
    with ad.default_dtype(np.float64):
        cell = GRUCell(rng, 4, 5)
        for lin in (cell.W_v, cell.W_u, cell.W_c):
            lin.bias.data[:] = rng.uniform(-0.5, 0.5, 4)
        h, x = inputs(rng)
        got = gru_step(cell, h, x).data
    np.testing.assert_allclose(got, gru_oracle(cell, h.data, x.data), atol=1e-6)


def test_gru_gate_limits():
    rng = np.random.default_rng(1)
    with ad.default_dtype(np.float64):
        cell = GRUCell(rng, 4, 5)
        h, x = inputs(rng)
        cell.W_u.bias.data[:] = -1e9
        np.testing.assert_array_equal(gru_step(cell, h, x).data, h.data)
        cell.W_u.bias.data[:] = 1e9
        _, _, cand = cell.gates(h, x)
        np.testing.assert_array_equal(gru_step(cell, h, x).data, cand.data)


def test_batch_mismatch_rejected():
    cell = VSGCell(np.random.default_rng(2), 4, 5)
    with pytest.raises(ad.ShapeError, match="batch"):
        vsg_step(cell, Tensor(np.zeros((2, 4))), Tensor(np.zeros((3, 5))), philox(0))


def test_vsg_gate_is_binary_and_copies_closed_dims():
    rng = np.random.default_rng(3)
    cell = VSGCell(rng, 4, 5)
    h, x = inputs(rng)
    h2, g = vsg_step(cell, h, x, philox(1))
    assert set(np.unique(g.u.data)) <= {0.0, 1.0}
    closed = g.u.data == 0
    assert closed.any()
    assert h2.data[closed].tobytes() == h.data[closed].tobytes()
    assert g.u_tilde.shape == h.shape == g.v.shape


def test_vsg_copy_invariance_over_1000_steps():
    rng = np.random.default_rng(4)
    cell = VSGCell(rng, 8, 3)
    gen = philox(2)
    h = Tensor(rng.uniform(-1, 1, (2, 8)))
    start = h.data.copy()
    for _ in range(1000):
        x = Tensor(rng.uniform(-1, 1, (2, 3)))
        prev = h.data.copy()
        h, g = vsg_step(cell, h, x, gen)
        closed = g.u.data == 0
        assert h.data[closed].tobytes() == prev[closed].tobytes()
    # hold one dim shut for the whole run by saturating its gate bias
    cell.W_u.bias.data[0] = -1e9
    h = Tensor(start)
    for _ in range(1000):
        h, _ = vsg_step(cell, h, Tensor(rng.uniform(-1, 1, (2, 3))), gen)
    assert h.data[:, 0].tobytes() == start[:, 0].tobytes()


def test_vsg_force_open_equals_gru():
    rng = np.random.default_rng(5)
    cell = VSGCell(rng, 4, 5)
    h, x = inputs(rng)
    h_vsg, _ = vsg_step(cell, h, x, None, force_open=True)
    cell.W_u.bias.data[:] = 1e9
    h_open, _ = vsg_step(cell, h, x, philox(0))
    np.testing.assert_array_equal(h_vsg.data, h_open.data)
    cell.W_u.bias.data[:] = 0


def test_vsg_relaxed_equals_gru():
    rng = np.random.default_rng(6)
    with ad.default_dtype(np.float64):
        cell = VSGCell(rng, 4, 5)
        h, x = inputs(rng)
        relaxed, _ = vsg_step(cell, h, x, None, relaxed=True)
        np.testing.assert_allclose(relaxed.data, gru_step(cell, h, x).data, atol=1e-6)


def test_vsg_same_seed_same_trajectory():
    rng = np.random.default_rng(7)
    cell = VSGCell(rng, 6, 2)
    xs = [Tensor(rng.uniform(-1, 1, (2, 2))) for _ in range(50)]

    def unroll(seed):
        gen, h = philox(seed), Tensor(np.zeros((2, 6)))
        out = []
        for x in xs:
            h, _ = vsg_step(cell, h, x, gen)
            out.append(h.data.copy())
        return np.stack(out)
    assert unroll(3).tobytes() == unroll(3).tobytes()
    assert unroll(3).tobytes() != unroll(4).tobytes()


def test_gate_rate_with_frozen_probability():
    rng = np.random.default_rng(8)
    cell = VSGCell(rng, 16, 2)
    cell.W_u.weight.data[:] = 0
    p = 0.3
    cell.W_u.bias.data[:] = np.log(p / (1 - p))
    gen, h, n, total = philox(5), Tensor(np.zeros((4, 16))), 0, 0.0
    for _ in range(200):
        h, g = vsg_step(cell, h, Tensor(np.zeros((4, 2))), gen)
        total += g.u.data.sum()
        n += g.u.data.size
    sigma = np.sqrt(p * (1 - p) / n)
    assert abs(total / n - p) < 3 * sigma


@pytest.mark.parametrize("name", ["gru", "relaxed_vsg", "svsg_mean_path", "ssm_mean_path"])
def test_cell_gradients(name):
    with ad.default_dtype(np.float64):
        for k in range(5):
            fn, ts = helpers.CELLS[name](np.random.default_rng(k))
            assert check_gradients(fn, ts) < 1e-3


# -- SVSG -------------------------------------------------------------------

def svsg_setup(seed=9):
    rng = np.random.default_rng(seed)
    cell = SVSGCell(rng, 4, 3, 6, hidden=8)
    s, x = Tensor(rng.uniform(-1, 1, (2, 4))), Tensor(rng.uniform(-1, 1, (2, 3)))
    e = Tensor(rng.uniform(-1, 1, (2, 6)))
    return cell, s, x, e


def test_svsg_closed_gate_copies():
    cell, s, x, e = svsg_setup()
    out = svsg_step(cell, s, x, e, philox(0), gate=np.zeros((2, 4)))
    assert out.s.data.tobytes() == s.data.tobytes()
    assert out.s_hat.data.tobytes() == s.data.tobytes()


def test_svsg_open_gate_takes_samples():
    cell, s, x, e = svsg_setup()
    out = svsg_step(cell, s, x, e, philox(0), gate=np.ones((2, 4)), sample=False)
    np.testing.assert_array_equal(out.s_hat.data, out.prior.mean.data)
    np.testing.assert_array_equal(out.s.data, out.posterior.mean.data)


def test_svsg_shared_gate_between_branches():
    cell, s, x, e = svsg_setup()
    out = svsg_step(cell, s, x, e, philox(1))
    closed = out.gates.u.data == 0
    assert np.array_equal(out.s.data[closed], s.data[closed])
    assert np.array_equal(out.s_hat.data[closed], s.data[closed])
    assert out.prior.mean.shape == out.posterior.mean.shape == s.shape


def test_svsg_posterior_requires_embedding():
    cell, s, x, _ = svsg_setup()
    with pytest.raises(ValueError, match="embedding"):
        svsg_step(cell, s, x, None, philox(0), posterior=True)
    prior_only = svsg_step(cell, s, x, None, philox(0))
    assert prior_only.s is None and prior_only.posterior is None


# -- SSM --------------------------------------------------------------------

def test_ssm_zero_noise_is_mean():
    rng = np.random.default_rng(10)
    cell = SSMCell(rng, 4, 3, 6, hidden=8)
    s, x = Tensor(rng.uniform(-1, 1, (2, 4))), Tensor(rng.uniform(-1, 1, (2, 3)))
    e = Tensor(rng.uniform(-1, 1, (2, 6)))
    out = ssm_step(cell, s, x, e, None, sample=False)
    np.testing.assert_array_equal(out.s.data, out.posterior.mean.data)
    np.testing.assert_array_equal(out.s_hat.data, out.prior.mean.data)
    assert out.prior.mean.shape == out.posterior.mean.shape
    with pytest.raises(ValueError):
        ssm_step(cell, s, x, None, None, posterior=True)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_vsg_closed_dims_property(seed):
    rng = np.random.default_rng(seed)
    cell = VSGCell(rng, 5, 2)
    h, x = Tensor(rng.uniform(-3, 3, (3, 5))), Tensor(rng.uniform(-3, 3, (3, 2)))
    h2, g = vsg_step(cell, h, x, philox(seed))
    closed = g.u.data == 0
    assert h2.data[closed].tobytes() == h.data[closed].tobytes()
