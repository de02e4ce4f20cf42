"""Recurrent neural operator: outputs f(I, xi) with internal variables
advanced by xi^n = xi^{n-1} + dt_n g(I^n, xi^{n-1})."""
from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError
from ..types import INPUT_NAMES, OUTPUT_NAMES, EffectiveProps, PropsSeries, Trajectory
from .mlp import MLP
from .normalizer import Normalizer


@dataclass
class RNOConfig:
    k: int = 1
    hidden_layers: int = 4
    width: int = 64
    activation: str = "selu"
    input_dim: int = len(INPUT_NAMES)
    output_dim: int = len(OUTPUT_NAMES)

    def __post_init__(self):
        if self.k < 0:
            raise ConfigError("number of internal variables must be >= 0")
        if self.width < 1 or self.hidden_layers < 0:
            raise ConfigError("network width must be >= 1 and depth >= 0")

    def to_dict(self):
        return asdict(self)


@dataclass
class RNOModel:
    config: RNOConfig
    f: MLP
    g: MLP | None
    normalizer: Normalizer | None = None
    xi0: np.ndarray = field(default=None)
    metadata: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=lambda: {"out_of_range_inputs": 0})

    def __post_init__(self):
        if self.xi0 is None:
            self.xi0 = np.zeros(self.config.k)
        self.xi0 = np.asarray(self.xi0, dtype=float).reshape(self.config.k)

    @classmethod
    def init(cls, config: RNOConfig, normalizer: Normalizer | None = None, seed: int = 0):
        rng = np.random.default_rng(seed)
        c = config
        f = MLP(c.input_dim + c.k, c.output_dim, c.hidden_layers, c.width, c.activation, rng=rng)
        g = MLP(c.input_dim + c.k, c.k, c.hidden_layers, c.width, c.activation, rng=rng) if c.k else None
        if g is not None:
            # start with slow internal-variable dynamics
            g.weights[-1][...] *= 0.1
        return cls(c, f, g, normalizer)

    @property
    def k(self):
        return self.config.k

    # flat parameter vector [theta_f, theta_g] ---------------------------------
    @property
    def n_params(self):
        return self.f.size + (self.g.size if self.g is not None else 0)

    def get_params(self):
        parts = [self.f.params] + ([self.g.params] if self.g is not None else [])
        return np.concatenate(parts)

    def set_params(self, p):
        p = np.asarray(p, dtype=float)
        self.f.set_params(p[:self.f.size])
        if self.g is not None:
            self.g.set_params(p[self.f.size:])

    def copy(self):
        m = RNOModel(self.config, MLP(self.f.n_in, self.f.n_out, self.f.hidden, self.f.width,
                                      self.f.activation, params=self.f.params),
                     None if self.g is None else MLP(self.g.n_in, self.g.n_out, self.g.hidden,
                                                     self.g.width, self.g.activation,
                                                     params=self.g.params),
                     self.normalizer, self.xi0.copy(), dict(self.metadata))
        return m

    # normalized-space recurrence ---------------------------------------------
    def step_normalized(self, x, xi_prev, dt):
        """One step on normalized inputs ``x`` (B, 3); returns (y (B, 11), xi)."""
        xi_prev = np.asarray(xi_prev, dtype=float).reshape(len(x), self.k)
        if self.k:
            rate = self.g.forward(np.concatenate([x, xi_prev], axis=1))
            xi = xi_prev + np.asarray(dt, dtype=float).reshape(-1, 1) * rate
        else:
            xi = xi_prev
        y = self.f.forward(np.concatenate([x, xi], axis=1))
        return y, xi

    def forward_normalized(self, X, dt, xi0=None):
        """Unroll over a batch. ``X`` is (B, n, 3), ``dt`` (B, n) with dt[:, 0]
        ignored. Returns outputs (B, n, 11) and internal variables (B, n, k)."""
        B, n, _ = X.shape
        xi = np.empty((B, n, self.k))
        xi[:, 0] = self.xi0 if xi0 is None else np.asarray(xi0).reshape(-1, self.k)
        for t in range(1, n):
            if self.k:
                rate = self.g.forward(np.concatenate([X[:, t], xi[:, t - 1]], axis=1))
                xi[:, t] = xi[:, t - 1] + dt[:, t, None] * rate
        Y = self.f.forward(np.concatenate([X, xi], axis=2).reshape(B * n, -1))
        return Y.reshape(B, n, -1), xi

    # physical-space API -------------------------------------------------------
    def _require_normalizer(self):
        if self.normalizer is None:
            raise ConfigError("model has no fitted normalizer")
        return self.normalizer

    def step_batch(self, inputs, xi_prev, dt):
        """Physical inputs (P, 3) -> physical outputs (P, 11) and new xi (P, k)."""
        nz = self._require_normalizer()
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        self.diagnostics["out_of_range_inputs"] += nz.count_out_of_range(inputs)
        y, xi = self.step_normalized(nz.normalize_inputs(inputs), xi_prev, np.full(len(inputs), dt))
        return nz.denormalize_outputs(y), xi

    def initial_outputs(self, inputs, xi0):
        """Outputs at t = 0 (no internal-variable update)."""
        nz = self._require_normalizer()
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        xi0 = np.asarray(xi0, dtype=float).reshape(len(inputs), self.k)
        y = self.f.forward(np.concatenate([nz.normalize_inputs(inputs), xi0], axis=1))
        return nz.denormalize_outputs(y)


def rno_step(model: RNOModel, inp, xi_prev, dt: float):
    """One recurrence step for a single point: returns (EffectiveProps, xi_new)."""
    if dt <= 0:
        raise ConfigError("dt must be positive")
    c0, v0 = inp
    x = np.array([[float(c0), *np.asarray(v0, dtype=float).ravel()]])
    out, xi = model.step_batch(x, np.asarray(xi_prev, dtype=float).reshape(1, model.k), dt)
    return EffectiveProps.from_vector(out[0]), xi[0]


def rno_forward(model: RNOModel, traj: Trajectory, xi0=None, return_state: bool = False):
    """Run the recurrence over ``traj``; equals folding rno_step over its times.

    With ``return_state`` also returns the internal-variable history (n, k).
    """
    nz = model._require_normalizer()
    xi_prev = model.xi0.copy() if xi0 is None else np.asarray(xi0, dtype=float).reshape(model.k)
    inputs = traj.inputs
    model.diagnostics["out_of_range_inputs"] += nz.count_out_of_range(inputs)
    X = nz.normalize_inputs(inputs)
    n = len(traj)
    out = np.empty((n, len(OUTPUT_NAMES)))
    xis = np.empty((n, model.k))
    xi = xi_prev.reshape(1, -1)
    out[0] = model.f.forward(np.concatenate([X[:1], xi], axis=1))[0]
    xis[0] = xi[0]
    for t in range(1, n):
        y, xi = model.step_normalized(X[t:t + 1], xi, traj.times[t] - traj.times[t - 1])
        out[t] = y[0]
        xis[t] = xi[0]
    series = PropsSeries(traj.times, nz.denormalize_outputs(out))
    return (series, xis) if return_state else series


# --------------------------------------------------------------------------
# loss and gradient by backpropagation through time
# --------------------------------------------------------------------------

def trapezoid_weights(times):
    """Quadrature weights w with sum_n w_n f_n = trapezoid integral; (B, n)."""
    t = np.atleast_2d(np.asarray(times, dtype=float))
    d = np.diff(t, axis=1)
    w = np.zeros_like(t)
    w[:, :-1] += 0.5 * d
    w[:, 1:] += 0.5 * d
    return w


@dataclass
class Batch:
    """Normalized training arrays for trajectories sharing a step count."""

    X: np.ndarray  # (B, n, 3)
    Y: np.ndarray  # (B, n, 11)
    dt: np.ndarray  # (B, n)
    w: np.ndarray  # (B, n)
    den: np.ndarray  # (B,)
    mask: np.ndarray  # (B,) trajectories with nonzero truth

    @classmethod
    def from_entries(cls, entries, normalizer: Normalizer):
        lengths = {len(tr) for tr, _ in entries}
        if len(lengths) != 1:
            raise ConfigError("batched training needs trajectories of equal length")
        X = np.stack([normalizer.normalize_inputs(tr.inputs) for tr, _ in entries])
        Y = np.stack([normalizer.normalize_outputs(ps.values) for _, ps in entries])
        times = np.stack([tr.times for tr, _ in entries])
        dt = np.zeros_like(times)
        dt[:, 1:] = np.diff(times, axis=1)
        w = trapezoid_weights(times)
        den = np.einsum("bn,bnc->b", w, Y * Y)
        mask = den > 0
        if not np.all(mask):
            warnings.warn(f"{int(np.sum(~mask))} trajectories with all-zero normalized truth excluded from the loss")
        return cls(X, Y, dt, w, np.where(mask, den, 1.0), mask)


def loss_and_grad(model: RNOModel, batch: Batch, need_grad: bool = True):
    """Mean over trajectories of int |Y - Yhat|^2 dt / int |Y|^2 dt, and its gradient."""
    B, n, _ = batch.X.shape
    k = model.k
    nb = int(np.sum(batch.mask))
    if nb == 0:
        return 0.0, np.zeros(model.n_params)
    xi = np.empty((B, n, k))
    xi[:, 0] = model.xi0
    g_tapes = [None] * n
    for t in range(1, n):
        if k:
            z = np.concatenate([batch.X[:, t], xi[:, t - 1]], axis=1)
            if need_grad:
                rate, g_tapes[t] = model.g.forward(z, keep=True)
            else:
                rate = model.g.forward(z)
            xi[:, t] = xi[:, t - 1] + batch.dt[:, t, None] * rate
    Zf = np.concatenate([batch.X, xi], axis=2).reshape(B * n, -1)
    if need_grad:
        Yhat, f_tape = model.f.forward(Zf, keep=True)
    else:
        Yhat = model.f.forward(Zf)
    Yhat = Yhat.reshape(B, n, -1)
    R = Yhat - batch.Y
    num = np.einsum("bn,bnc->b", batch.w, R * R)
    per = np.where(batch.mask, num / batch.den, 0.0)
    loss = float(per.sum() / nb)
    if not need_grad:
        return loss, None

    scale = np.where(batch.mask, 2.0 / (batch.den * nb), 0.0)
    dY = R * (batch.w * scale[:, None])[:, :, None]
    grad = np.zeros(model.n_params)
    gf = grad[:model.f.size]
    dZ, _ = model.f.backward(f_tape, dY.reshape(B * n, -1), gf)
    if k:
        gg = grad[model.f.size:]
        dxi_direct = dZ.reshape(B, n, -1)[:, :, -k:]
        adj = dxi_direct[:, n - 1].copy()
        for t in range(n - 1, 0, -1):
            drate = adj * batch.dt[:, t, None]
            dz, _ = model.g.backward(g_tapes[t], drate, gg)
            adj = adj + dz[:, -k:] + dxi_direct[:, t - 1]
    return loss, grad


def compute_loss(model: RNOModel, dataset, normalizer: Normalizer | None = None) -> float:
    """Relative L2-in-time loss of normalized outputs, averaged over trajectories."""
    entries = dataset.entries if hasattr(dataset, "entries") else dataset
    nz = normalizer or model._require_normalizer()
    by_len = {}
    for e in entries:
        by_len.setdefault(len(e[0]), []).append(e)
    total, count = 0.0, 0
    for group in by_len.values():
        batch = Batch.from_entries(group, nz)
        nb = int(np.sum(batch.mask))
        if nb:
            loss, _ = loss_and_grad(model, batch, need_grad=False)
            total += loss * nb
            count += nb
    return total / count if count else 0.0
