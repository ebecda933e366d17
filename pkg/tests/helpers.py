"""Shared builders for the gradient checks (unit tests and acceptance)."""
import numpy as np

from vsgwm import autodiff as ad
from vsgwm.autodiff import Tensor
from vsgwm.cells import GRUCell, SSMCell, SVSGCell, VSGCell, gru_step, ssm_step, svsg_step, vsg_step
from vsgwm.nn import MLP


def leaf(rng, *shape, lo=-1.0, hi=1.0):
    return Tensor(rng.uniform(lo, hi, shape), requires_grad=True)


def _weights(rng, shape):
    # fixed readout so every output element matters
    return rng.standard_normal(shape)


def _reduce(out, w):
    return ad.sum_(out * w)


def away_from(rng, x, kinks, gap=0.01):
    """Resample entries within ``gap`` of a non-differentiable point."""
    for k in kinks:
        bad = np.abs(x.data - k) < gap
        while bad.any():
            x.data[bad] = k + np.sign(rng.uniform(-1, 1, bad.sum())) * rng.uniform(gap, 0.5, bad.sum())
            bad = np.abs(x.data - k) < gap
    return x


def unary(op, lo=-1.0, hi=1.0, kinks=()):
    def build(rng):
        x = away_from(rng, leaf(rng, 3, 4, lo=lo, hi=hi), kinks)
        w = _weights(rng, (3, 4))
        return (lambda: _reduce(op(x), w)), [x]
    return build


def binary(op, shape_a=(3, 4), shape_b=(3, 4), lo_b=-1.0, hi_b=1.0):
    def build(rng):
        a = leaf(rng, *shape_a)
        b = leaf(rng, *shape_b, lo=lo_b, hi=hi_b)
        out_shape = np.broadcast_shapes(shape_a, shape_b)
        w = _weights(rng, out_shape)
        return (lambda: _reduce(op(a, b), w)), [a, b]
    return build


def _maximum(rng):
    a = leaf(rng, 3, 4)
    off = rng.choice([-1, 1], (3, 4)) * rng.uniform(0.01, 0.5, (3, 4))
    b = Tensor(a.data + off, requires_grad=True)
    w = _weights(rng, (3, 4))
    return (lambda: _reduce(ad.maximum(a, b), w)), [a, b]


def _matmul(rng):
    a, b = leaf(rng, 3, 5), leaf(rng, 5, 2)
    w = _weights(rng, (3, 2))
    return (lambda: _reduce(ad.matmul(a, b), w)), [a, b]


def _batched_matmul(rng):
    a, b = leaf(rng, 2, 3, 5), leaf(rng, 5, 2)
    w = _weights(rng, (2, 3, 2))
    return (lambda: _reduce(a @ b, w)), [a, b]


def _linear(rng):
    x, wt, b = leaf(rng, 2, 3, 4), leaf(rng, 4, 5), leaf(rng, 5)
    w = _weights(rng, (2, 3, 5))
    return (lambda: _reduce(ad.linear(x, wt, b), w)), [x, wt, b]


def _reduction(fn, shape=(3, 4, 2)):
    def build(rng):
        x = leaf(rng, *shape)
        out = fn(x)
        w = _weights(rng, out.shape)
        return (lambda: _reduce(fn(x), w)), [x]
    return build


def _concat(rng):
    h, i = leaf(rng, 2, 3), leaf(rng, 2, 5)
    w = _weights(rng, (2, 8))
    return (lambda: _reduce(ad.concat([h, i], axis=-1), w)), [h, i]


def _stack(rng):
    a, b = leaf(rng, 2, 3), leaf(rng, 2, 3)
    w = _weights(rng, (2, 2, 3))
    return (lambda: _reduce(ad.stack([a, b], axis=1), w)), [a, b]


def _getitem(rng):
    x = leaf(rng, 4, 5)
    w = _weights(rng, (2, 3))
    return (lambda: _reduce(x[1:3, ::2], w)), [x]


def _fancy_index(rng):
    x = leaf(rng, 4, 3)
    idx = np.array([0, 2, 2, 3])
    w = _weights(rng, (4, 3))
    return (lambda: _reduce(x[idx], w)), [x]


def _where(rng):
    a, b = leaf(rng, 3, 4), leaf(rng, 3, 4)
    cond = rng.random((3, 4)) < 0.5
    w = _weights(rng, (3, 4))
    return (lambda: _reduce(ad.where(cond, a, b), w)), [a, b]


def _conv2d(rng):
    x = leaf(rng, 2, 3, 8, 8)
    k = leaf(rng, 4, 3, 4, 4)
    b = leaf(rng, 4)
    w = _weights(rng, (2, 4, 4, 4))
    return (lambda: _reduce(ad.conv2d(x, k, b, stride=2, padding=1), w)), [x, k, b]


def _conv_transpose2d(rng):
    x = leaf(rng, 2, 4, 3, 3)
    k = leaf(rng, 4, 3, 4, 4)
    b = leaf(rng, 3)
    w = _weights(rng, (2, 3, 6, 6))
    return (lambda: _reduce(ad.conv_transpose2d(x, k, b, stride=2, padding=1), w)), [x, k, b]


PRIMITIVES = {
    "add": binary(ad.add, (3, 4), (4,)),
    "sub": binary(ad.sub, (3, 1), (3, 4)),
    "mul": binary(ad.mul, (3, 4), (3, 4)),
    "div": binary(ad.div, (3, 4), (3, 4), lo_b=0.5, hi_b=2.0),
    "maximum": _maximum,
    "matmul": _matmul,
    "batched_matmul": _batched_matmul,
    "linear": _linear,
    "neg": unary(ad.neg),
    "square": unary(ad.square),
    "power": unary(lambda x: ad.power(x, 3.0)),
    "sqrt": unary(ad.sqrt, 0.2, 2.0),
    "exp": unary(ad.exp),
    "log": unary(ad.log, 0.2, 2.0),
    "sigmoid": unary(ad.sigmoid),
    "tanh": unary(ad.tanh),
    "softplus": unary(ad.softplus, -3, 3),
    "log_sigmoid": unary(ad.log_sigmoid, -3, 3),
    "elu": unary(ad.elu, kinks=(0.0,)),
    "relu": unary(ad.relu, kinks=(0.0,)),
    "clip": unary(lambda x: ad.clip(x, -0.5, 0.5), kinks=(-0.5, 0.5)),
    "sum": _reduction(lambda x: ad.sum_(x, axis=1)),
    "mean": _reduction(lambda x: ad.mean(x, axis=(0, 2))),
    "logsumexp": _reduction(lambda x: ad.logsumexp(x, axis=-1)),
    "softmax": _reduction(lambda x: ad.softmax(x, axis=-1)),
    "log_softmax": _reduction(lambda x: ad.log_softmax(x, axis=1)),
    "reshape": _reduction(lambda x: x.reshape(4, 6)),
    "transpose": _reduction(lambda x: x.transpose(2, 0, 1)),
    "concat": _concat,
    "stack": _stack,
    "getitem": _getitem,
    "fancy_index": _fancy_index,
    "where": _where,
    "conv2d": _conv2d,
    "conv_transpose2d": _conv_transpose2d,
}


def _cell_inputs(rng, d=4, n=3, batch=2):
    h = leaf(rng, batch, d)
    i = leaf(rng, batch, n)
    return h, i


def _cell_params(cell):
    return cell.parameters()


def _gru(rng):
    cell = GRUCell(rng, 4, 3)
    h, i = _cell_inputs(rng)
    w = _weights(rng, (2, 4))
    return (lambda: _reduce(gru_step(cell, h, i), w)), [h, i] + _cell_params(cell)


def _relaxed_vsg(rng):
    cell = VSGCell(rng, 4, 3)
    h, i = _cell_inputs(rng)
    w = _weights(rng, (2, 4))
    return (lambda: _reduce(vsg_step(cell, h, i, None, relaxed=True)[0], w)), \
        [h, i] + _cell_params(cell)


def _svsg_mean(rng):
    cell = SVSGCell(rng, 4, 3, 5, hidden=6)
    s, i = _cell_inputs(rng)
    e = leaf(rng, 2, 5)
    w1, w2 = _weights(rng, (2, 4)), _weights(rng, (2, 4))

    def fn():
        out = svsg_step(cell, s, i, e, None, sample=False, relaxed=True)
        return _reduce(out.s, w1) + _reduce(out.s_hat, w2)
    return fn, [s, i, e] + _cell_params(cell)


def _ssm_mean(rng):
    cell = SSMCell(rng, 4, 3, 5, hidden=6)
    s, i = _cell_inputs(rng)
    e = leaf(rng, 2, 5)
    w1, w2 = _weights(rng, (2, 4)), _weights(rng, (2, 4))

    def fn():
        out = ssm_step(cell, s, i, e, None, sample=False)
        return _reduce(out.s, w1) + _reduce(out.s_hat, w2) + ad.sum_(out.posterior.std)
    return fn, [s, i, e] + _cell_params(cell)


def _mlp3(rng):
    net = MLP(rng, 5, 6, 2, layers=2)
    x = leaf(rng, 3, 5)
    w = _weights(rng, (3, 2))
    return (lambda: _reduce(net(x), w)), [x] + net.parameters()


CELLS = {
    "gru": _gru,
    "relaxed_vsg": _relaxed_vsg,
    "svsg_mean_path": _svsg_mean,
    "ssm_mean_path": _ssm_mean,
    "mlp3": _mlp3,
}
