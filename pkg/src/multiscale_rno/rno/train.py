"""Adam training by backpropagation through time, and a finite-difference
check of the gradient."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError
from ..types import Trajectory, PropsSeries
from .model import Batch, RNOModel, loss_and_grad
from .normalizer import Normalizer

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 2000
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 0  # 0 means full batch
    lr_decay: str = "none"  # none | cosine | step
    lr_min_factor: float = 0.05
    seed: int = 0
    log_every: int = 100

    def to_dict(self):
        return asdict(self)

    def lr_at(self, epoch):
        if self.lr_decay == "none":
            return self.lr
        frac = epoch / max(1, self.epochs - 1)
        if self.lr_decay == "cosine":
            f = self.lr_min_factor + (1 - self.lr_min_factor) * 0.5 * (1 + np.cos(np.pi * frac))
            return self.lr * f
        if self.lr_decay == "step":
            return self.lr * (0.1 ** int(3 * frac)) if frac < 1 else self.lr * 0.001
        raise ConfigError(f"unknown lr schedule {self.lr_decay!r}")


class Adam:
    def __init__(self, n, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0
        self.b1, self.b2, self.eps = beta1, beta2, eps

    def step(self, params, grad, lr):
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        mhat = self.m / (1 - self.b1 ** self.t)
        vhat = self.v / (1 - self.b2 ** self.t)
        return params - lr * mhat / (np.sqrt(vhat) + self.eps)


@dataclass
class TrainResult:
    model: RNOModel
    train_loss: np.ndarray
    test_loss: np.ndarray
    diverged: bool = False

    def loss_rows(self):
        return [(e, tr, te) for e, (tr, te) in enumerate(zip(self.train_loss, self.test_loss))]


def split_dataset(entries, test_fraction=0.2, seed=0):
    """Disjoint train/test split by trajectory with a seeded permutation."""
    n = len(entries)
    perm = np.random.default_rng(seed).permutation(n)
    n_test = int(round(test_fraction * n)) if n > 1 else 0
    test = sorted(perm[:n_test].tolist())
    train = sorted(perm[n_test:].tolist())
    return [entries[i] for i in train], [entries[i] for i in test]


def train(model: RNOModel, train_entries, test_entries=(), hyper: TrainConfig | None = None,
          normalizer: Normalizer | None = None) -> TrainResult:
    """Minimize the relative L2 loss on ``train_entries`` with Adam."""
    hyper = hyper or TrainConfig()
    if normalizer is not None:
        model.normalizer = normalizer
    nz = model._require_normalizer()
    model = model.copy()
    tr_batch = Batch.from_entries(list(train_entries), nz)
    te_batch = Batch.from_entries(list(test_entries), nz) if len(test_entries) else None
    rng = np.random.default_rng(hyper.seed)
    opt = Adam(model.n_params, hyper.beta1, hyper.beta2, hyper.eps)
    params = model.get_params()
    last_good = params.copy()
    B = tr_batch.X.shape[0]
    bs = hyper.batch_size if 0 < hyper.batch_size < B else B
    train_hist, test_hist = [], []
    diverged = False
    for epoch in range(hyper.epochs):
        order = rng.permutation(B) if bs < B else np.arange(B)
        lr = hyper.lr_at(epoch)
        ep_loss = 0.0
        for s in range(0, B, bs):
            idx = order[s:s + bs]
            sub = tr_batch if bs == B else Batch(tr_batch.X[idx], tr_batch.Y[idx], tr_batch.dt[idx],
                                                 tr_batch.w[idx], tr_batch.den[idx], tr_batch.mask[idx])
            loss, grad = loss_and_grad(model, sub)
            if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
                diverged = True
                break
            ep_loss += loss * len(idx)
            last_good = params.copy()
            params = opt.step(params, grad, lr)
            model.set_params(params)
        if diverged:
            log.warning("training diverged at epoch %d; keeping last finite parameters", epoch)
            model.set_params(last_good)
            break
        train_hist.append(ep_loss / B)
        test_hist.append(loss_and_grad(model, te_batch, need_grad=False)[0] if te_batch else np.nan)
        if hyper.log_every and epoch % hyper.log_every == 0:
            log.info("epoch %d train %.4e test %.4e", epoch, train_hist[-1], test_hist[-1])
    # losses above are evaluated before each update; report the final state too
    final_train = loss_and_grad(model, tr_batch, need_grad=False)[0]
    final_test = loss_and_grad(model, te_batch, need_grad=False)[0] if te_batch else np.nan
    train_hist.append(final_train)
    test_hist.append(final_test)
    xi_range = []
    if model.k:
        xi = model.forward_normalized(tr_batch.X, tr_batch.dt)[1].reshape(-1, model.k)
        xi_range = [[float(a), float(b)] for a, b in zip(xi.min(axis=0), xi.max(axis=0))]
    model.metadata = dict(model.metadata, train=hyper.to_dict(), final_train_loss=final_train,
                          xi_range=xi_range,
                          final_test_loss=final_test, n_train=len(train_entries),
                          n_test=len(test_entries), diverged=diverged)
    return TrainResult(model, np.array(train_hist), np.array(test_hist), diverged)


def gradient_check(model: RNOModel, traj: Trajectory, truth: PropsSeries, epsilon: float = 1e-4,
                   n_coords: int = 64, seed: int = 0, coords=None, refine: int = 3, agree: float = 1e-6):
    """Max relative error between the BPTT gradient and central differences.

    SELU has a kink at 0, so a central difference whose stencil makes some
    pre-activation along the history change sign is not a derivative. For each
    coordinate the difference at step h is kept when it agrees with the one at
    h/4 to ``agree`` relatively, up to round-off; otherwise h is divided by 4 (up to ``refine``
    times). The choice uses only the differences, never the analytic gradient.

    Returns (max_rel_err, coords, analytic, numeric).
    """
    nz = model._require_normalizer()
    batch = Batch.from_entries([(traj, truth)], nz)
    model = model.copy()
    p0 = model.get_params()
    l0, g = loss_and_grad(model, batch)
    rng = np.random.default_rng(seed)
    if coords is None:
        coords = rng.choice(p0.size, size=min(n_coords, p0.size), replace=False)

    def central(c, eps):
        p = p0.copy()
        p[c] += eps
        model.set_params(p)
        lp, _ = loss_and_grad(model, batch, need_grad=False)
        p[c] -= 2 * eps
        model.set_params(p)
        lm, _ = loss_and_grad(model, batch, need_grad=False)
        return (lp - lm) / (2 * eps)

    num = np.empty(len(coords))
    for a, c in enumerate(coords):
        eps = epsilon
        d = central(c, eps)
        for _ in range(refine):
            d_fine = central(c, eps / 4)
            noise = 1e-13 * abs(l0) / (eps / 4)  # round-off of a difference quotient
            if abs(d_fine - d) <= agree * max(abs(d), abs(d_fine)) + noise:
                break
            eps, d = eps / 4, d_fine
        num[a] = d
    model.set_params(p0)
    ana = g[coords]
    denom = np.maximum(np.abs(ana), np.abs(num))
    rel = np.where(denom > 1e-12, np.abs(ana - num) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(rel.max()), np.asarray(coords), ana, num
