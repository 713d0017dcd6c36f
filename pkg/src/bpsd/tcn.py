"""Small temporal convolutional network over the 11 x 5 signal window, numpy only.

Blocks are [causal dilated conv -> ReLU -> dropout] x 2 plus a residual path (1x1
projection on the first block), followed by ReLU. The last time step of the final block
feeds a linear map to a 256-d latent, then a linear classifier head with softmax.
Gradients are written out by hand and checked against central differences.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

FORMAT_VERSION = 1


@dataclass(frozen=True)
class TcnConfig:
    in_channels: int = 11
    seq_len: int = 5
    dilations: tuple[int, ...] = (1, 2, 4)
    kernel_size: int = 2
    hidden_channels: int = 64
    latent_dim: int = 256
    dropout: float = 0.1
    epochs: int = 50
    batch: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    class_weighted: bool = True
    activation: str = "relu"  # "identity" gives a purely linear net (gradient-check baseline)
    seed: int = 0

    def __post_init__(self):
        if self.kernel_size != 2:
            raise ValueError("only kernel_size=2 is supported")
        if self.receptive_field < self.seq_len:
            raise ValueError(f"receptive field {self.receptive_field} shorter than seq_len {self.seq_len}")
        if self.activation not in ("relu", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def receptive_field(self) -> int:
        return 1 + (self.kernel_size - 1) * sum(self.dilations)


def _shift(x: np.ndarray, d: int) -> np.ndarray:
    """x[..., t - d] with zeros for t < d (causal left padding)."""
    out = np.zeros_like(x)
    if d < x.shape[-1]:
        out[..., d:] = x[..., :-d]
    return out


def _unshift(g: np.ndarray, d: int) -> np.ndarray:
    out = np.zeros_like(g)
    if d < g.shape[-1]:
        out[..., :-d] = g[..., d:]
    return out


def _conv(W: np.ndarray, b: np.ndarray, x: np.ndarray, d: int) -> np.ndarray:
    # W: (out, in, 2); tap 0 reads t - d, tap 1 reads t
    y = np.tensordot(x, W[:, :, 1], axes=([1], [1])) + np.tensordot(_shift(x, d), W[:, :, 0], axes=([1], [1]))
    return y.transpose(0, 2, 1) + b[None, :, None]


def _conv_backward(W, x, d, dy):
    xs = _shift(x, d)
    dW = np.empty_like(W)
    dW[:, :, 1] = np.tensordot(dy, x, axes=([0, 2], [0, 2]))
    dW[:, :, 0] = np.tensordot(dy, xs, axes=([0, 2], [0, 2]))
    db = dy.sum(axis=(0, 2))
    dx = np.tensordot(dy, W[:, :, 1], axes=([1], [0])).transpose(0, 2, 1)
    dx += _unshift(np.tensordot(dy, W[:, :, 0], axes=([1], [0])).transpose(0, 2, 1), d)
    return dW, db, dx


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(eq=False)
class TcnNetwork:
    config: TcnConfig
    n_classes: int
    params: dict[str, np.ndarray]
    loss_history: list[float] = field(default_factory=list)

    @classmethod
    def init(cls, config: TcnConfig, n_classes: int, seed: int | None = None) -> "TcnNetwork":
        rng = np.random.default_rng(config.seed if seed is None else seed)
        p: dict[str, np.ndarray] = {}
        c_in = config.in_channels
        h = config.hidden_channels
        for i, _ in enumerate(config.dilations):
            p[f"block{i}.conv1.W"] = rng.normal(0, np.sqrt(2.0 / (2 * c_in)), (h, c_in, 2))
            p[f"block{i}.conv1.b"] = np.zeros(h)
            p[f"block{i}.conv2.W"] = rng.normal(0, np.sqrt(2.0 / (2 * h)), (h, h, 2))
            p[f"block{i}.conv2.b"] = np.zeros(h)
            if c_in != h:
                p[f"block{i}.proj.W"] = rng.normal(0, np.sqrt(1.0 / c_in), (h, c_in))
                p[f"block{i}.proj.b"] = np.zeros(h)
            c_in = h
        p["latent.W"] = rng.normal(0, np.sqrt(1.0 / h), (config.latent_dim, h))
        p["latent.b"] = np.zeros(config.latent_dim)
        p["head.W"] = rng.normal(0, np.sqrt(1.0 / config.latent_dim), (n_classes, config.latent_dim))
        p["head.b"] = np.zeros(n_classes)
        return cls(config, n_classes, p)

    def _act(self, z):
        return np.maximum(z, 0.0) if self.config.activation == "relu" else z

    def _act_grad(self, z):
        return (z > 0).astype(float) if self.config.activation == "relu" else np.ones_like(z)

    def _forward(self, x: np.ndarray, rng: np.random.Generator | None = None):
        """Returns (probs, latent, cache). ``rng`` enables dropout."""
        x = np.asarray(x, dtype=float)
        p = self.params
        cache = {"x": x, "blocks": []}
        h = x
        keep = 1.0 - self.config.dropout
        for i, d in enumerate(self.config.dilations):
            z1 = _conv(p[f"block{i}.conv1.W"], p[f"block{i}.conv1.b"], h, d)
            a1 = self._act(z1)
            m1 = rng.random(a1.shape) < keep if rng is not None and keep < 1 else None
            if m1 is not None:
                a1 = a1 * m1 / keep
            z2 = _conv(p[f"block{i}.conv2.W"], p[f"block{i}.conv2.b"], a1, d)
            a2 = self._act(z2)
            m2 = rng.random(a2.shape) < keep if rng is not None and keep < 1 else None
            if m2 is not None:
                a2 = a2 * m2 / keep
            if f"block{i}.proj.W" in p:
                res = np.tensordot(h, p[f"block{i}.proj.W"], axes=([1], [1])).transpose(0, 2, 1)
                res = res + p[f"block{i}.proj.b"][None, :, None]
            else:
                res = h
            z3 = a2 + res
            out = self._act(z3)
            cache["blocks"].append((h, z1, a1, m1, z2, a2, m2, z3, d))
            h = out
        last = h[:, :, -1]
        latent = last @ p["latent.W"].T + p["latent.b"]
        logits = latent @ p["head.W"].T + p["head.b"]
        probs = softmax(logits)
        cache.update(last=last, latent=latent, final=h, logits=logits)
        return probs, latent, cache

    def forward(self, window: np.ndarray) -> dict:
        """Inference on one (11, 5) window or a batch (n, 11, 5); dropout off."""
        window = np.asarray(window, dtype=float)
        single = window.ndim == 2
        x = window[None] if single else window
        if x.shape[1:] != (self.config.in_channels, self.config.seq_len):
            raise ValueError(f"expected windows of shape ({self.config.in_channels}, {self.config.seq_len}), got {x.shape[1:]}")
        probs, latent, _ = self._forward(x)
        if single:
            return {"latent": latent[0], "probs": probs[0]}
        return {"latent": latent, "probs": probs}

    def block_outputs(self, x: np.ndarray) -> list[np.ndarray]:
        """Intermediate block outputs (inference mode), for causality checks."""
        _, _, cache = self._forward(np.asarray(x, dtype=float))
        outs = [blk[0] for blk in cache["blocks"][1:]] + [cache["final"]]
        return outs

    def loss_and_grads(self, x, y, class_weights=None, rng=None):
        """Weighted mean cross-entropy and its gradient w.r.t. every parameter."""
        probs, latent, cache = self._forward(x, rng)
        n = len(y)
        w = np.ones(n) if class_weights is None else class_weights[y]
        wsum = w.sum()
        loss = float(-(w * np.log(np.clip(probs[np.arange(n), y], 1e-300, None))).sum() / wsum)

        dlogits = probs.copy()
        dlogits[np.arange(n), y] -= 1.0
        dlogits *= (w / wsum)[:, None]
        return loss, self._backward(cache, dlogits)

    def _backward(self, cache: dict, dlogits: np.ndarray) -> dict[str, np.ndarray]:
        p = self.params
        latent = cache["latent"]
        g: dict[str, np.ndarray] = {}
        g["head.W"] = dlogits.T @ latent
        g["head.b"] = dlogits.sum(axis=0)
        dlatent = dlogits @ p["head.W"]
        g["latent.W"] = dlatent.T @ cache["last"]
        g["latent.b"] = dlatent.sum(axis=0)
        dh = np.zeros_like(cache["final"])
        dh[:, :, -1] = dlatent @ p["latent.W"]

        keep = 1.0 - self.config.dropout
        for i in range(len(self.config.dilations) - 1, -1, -1):
            h_in, z1, a1, m1, z2, a2, m2, z3, d = cache["blocks"][i]
            dz3 = dh * self._act_grad(z3)
            da2 = dz3
            if f"block{i}.proj.W" in p:
                g[f"block{i}.proj.W"] = np.tensordot(dz3, h_in, axes=([0, 2], [0, 2]))
                g[f"block{i}.proj.b"] = dz3.sum(axis=(0, 2))
                dh_in = np.tensordot(dz3, p[f"block{i}.proj.W"], axes=([1], [0])).transpose(0, 2, 1)
            else:
                dh_in = dz3.copy()
            if m2 is not None:
                da2 = da2 * m2 / keep
            dz2 = da2 * self._act_grad(z2)
            g[f"block{i}.conv2.W"], g[f"block{i}.conv2.b"], da1 = _conv_backward(p[f"block{i}.conv2.W"], a1, d, dz2)
            if m1 is not None:
                da1 = da1 * m1 / keep
            dz1 = da1 * self._act_grad(z1)
            g[f"block{i}.conv1.W"], g[f"block{i}.conv1.b"], dx = _conv_backward(p[f"block{i}.conv1.W"], h_in, d, dz1)
            dh = dh_in + dx
        return g

    def loss(self, x, y, class_weights=None) -> float:
        probs, _, _ = self._forward(x)
        n = len(y)
        w = np.ones(n) if class_weights is None else class_weights[y]
        return float(-(w * np.log(np.clip(probs[np.arange(n), y], 1e-300, None))).sum() / w.sum())

    # --- persistence -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": "tcn",
            "config": {**asdict(self.config), "dilations": list(self.config.dilations)},
            "n_classes": self.n_classes,
            "layers": [{"name": k, "shape": list(v.shape), "values": v.ravel().tolist()} for k, v in self.params.items()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TcnNetwork":
        if d.get("format_version") != FORMAT_VERSION or d.get("kind") != "tcn":
            raise ValueError("not a TCN record of a supported format_version")
        cfg = dict(d["config"])
        cfg["dilations"] = tuple(cfg["dilations"])
        params = {L["name"]: np.asarray(L["values"], dtype=float).reshape(L["shape"]) for L in d["layers"]}
        return cls(TcnConfig(**cfg), d["n_classes"], params)


def class_weights_for(y: np.ndarray, n_classes: int) -> np.ndarray:
    """Weights proportional to 1/count, scaled so the weighted sample total equals n."""
    counts = np.bincount(y, minlength=n_classes).astype(float)
    present = counts > 0
    w = np.zeros(n_classes)
    w[present] = len(y) / (present.sum() * counts[present])
    return w


def train(windows: np.ndarray, y: np.ndarray, n_classes: int, config: TcnConfig = TcnConfig(), net: TcnNetwork | None = None) -> TcnNetwork:
    """Adam on (class-weighted) cross-entropy. ``windows``: (n, 11, 5)."""
    x = np.asarray(windows, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if len(np.unique(y)) < 2:
        raise ValueError("TCN training needs at least two classes")
    net = net or TcnNetwork.init(config, n_classes)
    cw = class_weights_for(y, n_classes) if config.class_weighted else None
    rng = np.random.default_rng([config.seed, 1])
    m = {k: np.zeros_like(v) for k, v in net.params.items()}
    v = {k: np.zeros_like(v) for k, v in net.params.items()}
    step = 0
    n = len(y)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        losses, sizes = [], []
        for s in range(0, n, config.batch):
            idx = order[s : s + config.batch]
            loss, grads = net.loss_and_grads(x[idx], y[idx], cw, rng)
            losses.append(loss)
            sizes.append(len(idx))
            step += 1
            for k, g in grads.items():
                m[k] = config.beta1 * m[k] + (1 - config.beta1) * g
                v[k] = config.beta2 * v[k] + (1 - config.beta2) * g * g
                mh = m[k] / (1 - config.beta1**step)
                vh = v[k] / (1 - config.beta2**step)
                net.params[k] -= config.learning_rate * mh / (np.sqrt(vh) + config.eps)
        net.loss_history.append(float(np.average(losses, weights=sizes)))
    return net


def extract_latent(net: TcnNetwork, windows: np.ndarray) -> np.ndarray:
    x = np.asarray(windows, dtype=float)
    if len(x) == 0:
        return np.empty((0, net.config.latent_dim))
    return net.forward(x)["latent"]


def gradient_check(
    net: TcnNetwork,
    x: np.ndarray,
    y: np.ndarray,
    n_probes: int = 50,
    seed: int = 0,
    step: float = 1e-5,
    objective: str = "loss",
) -> float:
    """Max relative error between analytic and central-difference gradients on random
    parameter entries (dropout off, float64).

    ``objective="logits"`` checks a fixed random linear functional of the logits instead of
    the loss; for an identity-activation net that functional is linear in every single
    parameter, so central differences are exact up to roundoff.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    rng = np.random.default_rng(seed)
    if objective == "loss":
        cw = class_weights_for(y, net.n_classes) if net.config.class_weighted else None
        _, grads = net.loss_and_grads(x, y, cw)

        def f() -> float:
            return net.loss(x, y, cw)

    elif objective == "logits":
        proj = rng.normal(size=(len(x), net.n_classes))
        grads = net._backward(net._forward(x)[2], proj)

        def f() -> float:
            return float(np.sum(proj * net._forward(x)[2]["logits"]))

    else:
        raise ValueError(f"unknown objective {objective!r}")

    names = list(net.params)
    sizes = np.array([net.params[k].size for k in names])
    worst = 0.0
    for _ in range(n_probes):
        k = names[rng.choice(len(names), p=sizes / sizes.sum())]
        flat = net.params[k].reshape(-1)
        j = int(rng.integers(flat.size))
        orig = flat[j]
        flat[j] = orig + step
        lp = f()
        flat[j] = orig - step
        lm = f()
        flat[j] = orig
        numeric = (lp - lm) / (2 * step)
        analytic = grads[k].reshape(-1)[j]
        err = abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst
