"""Small supervised probes of the transition cells.

``memory_probe`` trains a bare cell to recall a symbol seen ``length``
steps earlier.  ``sparsity_probe`` trains a gated cell on a trivial
prediction task and tracks the mean gate probability under the sparsity
regulariser.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..cells import GRUCell, VSGCell, gru_step, vsg_step
from ..distributions import bernoulli_kl
from ..nn import Linear, Module
from ..optim import Adam

N_SYMBOLS = 4
# one-hot symbol, store marker, query
INPUT_DIM = N_SYMBOLS + 2
PROBE_CELLS = ("gru", "vsg", "vsg_open")


def copy_memory_batch(rng, batch, length, distractors=True):
    """Marked symbol at t=0, filler steps, then a query at t=length.

    Filler steps carry random unmarked symbols (or nothing when
    ``distractors`` is False).  Returns (x, labels).
    """
    labels = rng.integers(N_SYMBOLS, size=batch)
    x = np.zeros((length + 1, batch, INPUT_DIM))
    cols = np.arange(batch)
    x[0, cols, labels] = 1.0
    x[0, :, N_SYMBOLS] = 1.0
    if distractors and length > 1:
        filler = rng.integers(N_SYMBOLS, size=(length - 1, batch))
        x[np.arange(1, length)[:, None], cols[None], filler] = 1.0
    x[length, :, N_SYMBOLS + 1] = 1.0
    return x.astype(ad.get_default_dtype()), labels


class MemoryNet(Module):
    def __init__(self, rng, cell="gru", hidden=16, gate_bias=0.0):
        if cell not in PROBE_CELLS:
            raise ValueError(f"unknown probe cell {cell!r}; expected one of {PROBE_CELLS}")
        self.kind = cell
        cls = GRUCell if cell == "gru" else VSGCell
        self.cell = cls(rng, hidden, INPUT_DIM)
        # a negative update-gate bias starts every cell in the retain regime
        self.cell.W_u.bias.data[:] = gate_bias
        self.readout = Linear(rng, hidden, N_SYMBOLS)
        self.hidden = hidden

    def unroll(self, x, rng):
        h = Tensor(np.zeros((x.shape[1], self.hidden), dtype=x.dtype))
        opened = []
        for t in range(x.shape[0]):
            i = Tensor(x[t])
            if self.kind == "gru":
                h = gru_step(self.cell, h, i)
            else:
                h, g = vsg_step(self.cell, h, i, rng, force_open=self.kind == "vsg_open")
                opened.append(float(g.u.data.mean()))
        return h, opened

    def loss(self, x, labels, rng):
        h, opened = self.unroll(x, rng)
        logp = ad.log_softmax(self.readout(h), axis=-1)
        onehot = np.eye(N_SYMBOLS, dtype=x.dtype)[labels]
        return -ad.mean(ad.sum_(logp * onehot, axis=-1)), opened


@dataclass
class ProbeResult:
    cell: str
    length: int
    seed: int
    losses: list = field(default_factory=list)
    final_loss: float = float("nan")
    gate_open: float = float("nan")

    def to_dict(self):
        return {"cell": self.cell, "length": self.length, "seed": self.seed,
                "final_loss": self.final_loss, "gate_open": self.gate_open,
                "losses": self.losses}


def memory_probe(cell="vsg", length=50, seed=0, steps=1500, batch=32, hidden=16, lr=3e-3,
                 gate_bias=-3.0, distractors=True, eval_batch=512, log_every=10):
    """Train on fresh copy-memory batches; report cross-entropy on a held-out batch.

    Both cells start from the same retain-biased update gate (``gate_bias``).
    """
    init = np.random.Generator(np.random.Philox([seed, 0]))
    data = np.random.Generator(np.random.Philox([seed, 1]))
    gates = np.random.Generator(np.random.Philox([seed, 2]))
    net = MemoryNet(init, cell, hidden, gate_bias)
    opt = Adam(net.parameters(), lr)
    res = ProbeResult(cell, length, seed)
    for step in range(steps):
        x, y = copy_memory_batch(data, batch, length, distractors)
        loss, _ = net.loss(x, y, gates)
        ad.backward(loss)
        opt.step()
        if step % log_every == 0 or step == steps - 1:
            res.losses.append((step, float(loss.data)))
    test = np.random.Generator(np.random.Philox([seed, 3]))
    x, y = copy_memory_batch(test, eval_batch, length, distractors)
    loss, opened = net.loss(x, y, np.random.Generator(np.random.Philox([seed, 4])))
    res.final_loss = float(loss.data)
    res.gate_open = float(np.mean(opened)) if opened else 1.0
    return res


# -- sparsity regulariser probe -------------------------------------------------------

def sparsity_probe(alpha=0.1, kappa=0.3, seed=0, steps=5000, batch=16, length=8, hidden=32,
                   lr=3e-3, tol=0.02, patience=50, log_every=25):
    """Predict the next value of a noisy sine with a VSG cell.

    The loss is the squared prediction error plus ``alpha`` times the
    Bernoulli KL of the gate probabilities to ``kappa``.  Training stops
    early once the running gate probability has sat within ``tol`` of
    ``kappa`` for ``patience`` consecutive steps (only when ``alpha > 0``).
    Returns the trace of (step, mean gate probability).
    """
    init = np.random.Generator(np.random.Philox([seed, 10]))
    data = np.random.Generator(np.random.Philox([seed, 11]))
    gates = np.random.Generator(np.random.Philox([seed, 12]))
    cell = VSGCell(init, hidden, 1)
    head = Linear(init, hidden, 1)
    params = cell.parameters() + head.parameters()
    opt = Adam(params, lr)
    trace, streak = [], 0
    dt = ad.get_default_dtype()
    for step in range(steps):
        phase = data.uniform(0, 2 * np.pi, (batch, 1))
        t = np.arange(length + 1)[:, None, None]
        seq = (np.sin(phase[None] + 0.5 * t) + 0.05 * data.standard_normal(t.shape[:1] + phase.shape)).astype(dt)
        h = Tensor(np.zeros((batch, hidden), dtype=dt))
        err, probs = [], []
        for k in range(length):
            h, g = vsg_step(cell, h, Tensor(seq[k]), gates)
            err.append(ad.mean(ad.square(head(h) - seq[k + 1])))
            probs.append(g.u_tilde)
        u_tilde = ad.stack(probs, axis=1)
        loss = ad.mean(ad.stack(err))
        if alpha > 0:
            loss = loss + alpha * bernoulli_kl(u_tilde, kappa)
        ad.backward(loss)
        opt.step()
        p = float(u_tilde.data.mean())
        if step % log_every == 0:
            trace.append((step, p))
        streak = streak + 1 if abs(p - kappa) < tol else 0
        if alpha > 0 and streak >= patience:
            trace.append((step, p))
            break
    else:
        trace.append((steps - 1, p))
    return trace
