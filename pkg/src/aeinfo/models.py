"""Fully connected autoencoders trained with hand-written backprop and Adam.

Variants and their objectives:

===== =================================== ======================
name  loss                                bottleneck activation
===== =================================== ======================
ae    MSE                                 sigmoid
sae   MSE + w * KL(rho || mean activity)  sigmoid
tae   MSE, decoder weights = encoder^T    sigmoid
vae   BCE + KL(q(z|x) || N(0, I))         gaussian sampling
lae   MSE - lambda * sum(Y log Z)         softmax
===== =================================== ======================

Hidden and output layers are sigmoid everywhere.  Parameters live in a flat
``dict[str, ndarray]``; weight matrices are stored ``out x in`` so a layer maps
a batch ``a`` (rows are samples) to ``a @ W.T + b``.
"""
from dataclasses import asdict, dataclass

import numpy as np

VARIANTS = ("ae", "sae", "tae", "vae", "lae")
BOTTLENECK_ACTIVATION = {"vae": "gaussian-sampling", "lae": "softmax"}
BCE_CLAMP = 1e-7
LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class NetworkSpec:
    variant: str
    layer_dims: tuple
    sparsity_rho: float = 0.05
    sparsity_weight: float = 0.1
    lae_lambda: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "variant", self.variant.lower())
        object.__setattr__(self, "layer_dims", tuple(int(d) for d in self.layer_dims))
        dims = self.layer_dims
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if len(dims) < 3 or len(dims) % 2 == 0:
            raise ValueError(f"layer_dims needs an odd length >= 3, got {dims}")
        if dims != dims[::-1]:
            raise ValueError(f"layer_dims must be symmetric about the bottleneck, got {dims}")
        if min(dims) < 1:
            raise ValueError(f"layer sizes must be positive, got {dims}")
        if not 0 < self.sparsity_rho < 1:
            raise ValueError(f"sparsity_rho must lie in (0, 1), got {self.sparsity_rho}")

    @property
    def n_layers(self):
        """Number of affine maps between input and output."""
        return len(self.layer_dims) - 1

    @property
    def z_index(self):
        """Position of the bottleneck in the activation list [X, ..., X']."""
        return self.n_layers // 2

    @property
    def depth(self):
        return self.z_index - 1

    @property
    def bottleneck_activation(self):
        return BOTTLENECK_ACTIVATION.get(self.variant, "sigmoid")

    @property
    def hidden_activation(self):
        return "sigmoid"

    @property
    def layer_names(self):
        """Names of the internal representations, encoder to decoder."""
        enc = [f"E{i}" for i in range(1, self.depth + 1)]
        dec = [f"D{i}" for i in range(1, self.depth + 1)]
        return enc + ["Z"] + dec

    def activation(self, layer):
        if layer == self.z_index - 1:
            return self.bottleneck_activation
        return "sigmoid"

    def to_dict(self):
        d = asdict(self)
        d["layer_dims"] = list(self.layer_dims)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def shallow_spec(variant, input_dim=784, bottleneck=50, **kw):
    return NetworkSpec(variant, (input_dim, bottleneck, input_dim), **kw)


def deep_spec(variant, input_dim=784, hidden=(256, 128), bottleneck=50, **kw):
    dims = (input_dim, *hidden, bottleneck, *reversed(hidden), input_dim)
    return NetworkSpec(variant, dims, **kw)


def _is_vae_head(spec, layer):
    return spec.variant == "vae" and layer == spec.z_index - 1


def _weight_key(spec, layer):
    """Stored key for layer's weight and whether it is used transposed."""
    if spec.variant == "tae" and layer >= spec.z_index:
        return f"W{spec.n_layers - 1 - layer}", True
    return f"W{layer}", False


def layer_weight(params, spec, layer):
    key, transposed = _weight_key(spec, layer)
    return params[key].T if transposed else params[key]


def init_weights(spec, rng):
    """Glorot-uniform weights, zero biases."""
    params = {}

    def glorot(fan_out, fan_in):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform((fan_out, fan_in), -limit, limit)

    dims = spec.layer_dims
    for i in range(spec.n_layers):
        fan_in, fan_out = dims[i], dims[i + 1]
        if _is_vae_head(spec, i):
            params["W_mu"] = glorot(fan_out, fan_in)
            params["b_mu"] = np.zeros(fan_out)
            params["W_logvar"] = glorot(fan_out, fan_in)
            params["b_logvar"] = np.zeros(fan_out)
            continue
        key, transposed = _weight_key(spec, i)
        if not transposed:
            params[key] = glorot(fan_out, fan_in)
        params[f"b{i}"] = np.zeros(fan_out)
    return params


def sigmoid(s):
    e = np.exp(-np.abs(s))
    return np.where(s >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softmax(s):
    e = np.exp(s - s.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class ForwardTrace:
    spec: NetworkSpec
    activations: list  # [X, T_1, ..., T_{K-1}, X']
    mu: np.ndarray | None = None
    logvar: np.ndarray | None = None
    noise: np.ndarray | None = None

    @property
    def inputs(self):
        return self.activations[0]

    @property
    def output(self):
        return self.activations[-1]

    @property
    def bottleneck(self):
        return self.activations[self.spec.z_index]

    @property
    def layers(self):
        """Internal representations keyed by layer name."""
        return dict(zip(self.spec.layer_names, self.activations[1:-1]))


def _apply_layer(params, spec, layer, a):
    s = a @ layer_weight(params, spec, layer).T + params[f"b{layer}"]
    return softmax(s) if spec.activation(layer) == "softmax" else sigmoid(s)


def forward(params, spec, x, rng=None, noise=None):
    """Run a batch through the network, keeping every post-activation.

    For the VAE, ``noise`` fixes the reparameterization draw; otherwise it is
    sampled from ``rng``.
    """
    acts = [np.asarray(x, dtype=np.float64)]
    trace = ForwardTrace(spec, acts)
    for i in range(spec.n_layers):
        a = acts[-1]
        if _is_vae_head(spec, i):
            mu = a @ params["W_mu"].T + params["b_mu"]
            logvar = a @ params["W_logvar"].T + params["b_logvar"]
            if noise is None:
                if rng is None:
                    raise ValueError("VAE forward needs rng or noise")
                noise = rng.normal(mu.shape)
            h = mu + np.exp(0.5 * logvar) * noise
            trace.mu, trace.logvar, trace.noise = mu, logvar, noise
        else:
            h = _apply_layer(params, spec, i, a)
        if not np.all(np.isfinite(h)):
            name = (spec.layer_names + ["X'"])[i]
            raise FloatingPointError(f"non-finite activation in layer {name}")
        acts.append(h)
    return trace


def decode(params, spec, z):
    """Map bottleneck codes through the decoder half to output pixels."""
    a = np.asarray(z, dtype=np.float64)
    for i in range(spec.z_index, spec.n_layers):
        a = _apply_layer(params, spec, i, a)
    return a


# --- losses -----------------------------------------------------------------

def mse_loss(x, xr):
    x, xr = np.asarray(x), np.asarray(xr)
    return float(np.sum((x - xr) ** 2) / len(x))


def bce_loss(x, xr):
    x = np.asarray(x)
    p = np.clip(xr, BCE_CLAMP, 1.0 - BCE_CLAMP)
    return float(-np.sum(x * np.log(p) + (1.0 - x) * np.log(1.0 - p)) / len(x))


def _mean_activity(z):
    return np.clip(np.mean(z, axis=0), BCE_CLAMP, 1.0 - BCE_CLAMP)


def sae_penalty(z, rho):
    zh = _mean_activity(z)
    return float(np.sum(rho * np.log(rho / zh) + (1.0 - rho) * np.log((1.0 - rho) / (1.0 - zh))))


def vae_kl(mu, logvar):
    return float(0.5 * np.sum(mu ** 2 + np.exp(logvar) - logvar - 1.0) / len(mu))


def lae_loss(x, xr, z, y_onehot, lam):
    ce = -np.sum(y_onehot * np.log(np.maximum(z, LOG_FLOOR))) / len(x)
    return mse_loss(x, xr) + lam * float(ce)


def loss_terms(spec, trace, y_onehot=None):
    """Total loss and its named components for one forward trace."""
    x, xr = trace.inputs, trace.output
    v = spec.variant
    if v == "vae":
        terms = {"bce": bce_loss(x, xr), "kl": vae_kl(trace.mu, trace.logvar)}
    elif v == "sae":
        terms = {"mse": mse_loss(x, xr),
                 "sparsity": spec.sparsity_weight * sae_penalty(trace.bottleneck, spec.sparsity_rho)}
    elif v == "lae":
        if y_onehot is None:
            raise ValueError("LAE loss needs one-hot labels")
        mse = mse_loss(x, xr)
        terms = {"mse": mse, "ce": lae_loss(x, xr, trace.bottleneck, y_onehot, spec.lae_lambda) - mse}
    else:
        terms = {"mse": mse_loss(x, xr)}
    return sum(terms.values()), terms


# --- gradients ----------------------------------------------------------------

def backward(params, spec, trace, y_onehot=None):
    """Analytic gradient of ``loss_terms`` w.r.t. every entry of ``params``."""
    acts = trace.activations
    x, out = acts[0], acts[-1]
    if out.shape != x.shape:
        raise ValueError(f"output {out.shape} does not match input {x.shape}")
    n = len(x)
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    zi = spec.z_index

    if spec.variant == "vae":
        inside = (out > BCE_CLAMP) & (out < 1.0 - BCE_CLAMP)
        p = np.clip(out, BCE_CLAMP, 1.0 - BCE_CLAMP)
        g = np.where(inside, -(x / p - (1.0 - x) / (1.0 - p)) / n, 0.0)
    else:
        g = 2.0 * (out - x) / n
    delta = g * out * (1.0 - out)

    for i in range(spec.n_layers - 1, -1, -1):
        a_in = acts[i]
        if _is_vae_head(spec, i):
            std = np.exp(0.5 * trace.logvar)
            d_mu = delta + trace.mu / n
            d_lv = delta * trace.noise * 0.5 * std + 0.5 * (std * std - 1.0) / n
            grads["W_mu"] += d_mu.T @ a_in
            grads["b_mu"] += d_mu.sum(axis=0)
            grads["W_logvar"] += d_lv.T @ a_in
            grads["b_logvar"] += d_lv.sum(axis=0)
            g_in = d_mu @ params["W_mu"] + d_lv @ params["W_logvar"]
        else:
            key, transposed = _weight_key(spec, i)
            dw = delta.T @ a_in
            grads[key] += dw.T if transposed else dw
            grads[f"b{i}"] += delta.sum(axis=0)
            g_in = delta @ layer_weight(params, spec, i)
        if i == 0:
            break

        h = acts[i]
        if i == zi:
            if spec.variant == "sae":
                zh_raw = np.mean(h, axis=0)
                zh = _mean_activity(h)
                inside = (zh_raw > BCE_CLAMP) & (zh_raw < 1.0 - BCE_CLAMP)
                rho = spec.sparsity_rho
                dz = np.where(inside, -rho / zh + (1.0 - rho) / (1.0 - zh), 0.0)
                g_in = g_in + spec.sparsity_weight * dz / n
            elif spec.variant == "lae":
                g_in = g_in - spec.lae_lambda / n * np.where(h >= LOG_FLOOR, y_onehot / np.maximum(h, LOG_FLOOR), 0.0)

        if _is_vae_head(spec, i - 1):
            delta = g_in
        elif spec.activation(i - 1) == "softmax":
            delta = h * (g_in - np.sum(g_in * h, axis=1, keepdims=True))
        else:
            delta = g_in * h * (1.0 - h)
    return grads


def loss_and_grads(params, spec, x, y_onehot=None, rng=None, noise=None):
    trace = forward(params, spec, x, rng=rng, noise=noise)
    total, terms = loss_terms(spec, trace, y_onehot)
    return total, terms, backward(params, spec, trace, y_onehot), trace


class Adam:
    """Adam with bias correction; updates a parameter dict in place."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, p in params.items():
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return params
