"""Dense ReLU networks with hand-written backward passes, plus optimizers."""

import numpy as np

HIDDEN = (256, 128)


class Mlp:
    """Fully connected net: ReLU on hidden layers, linear output.

    ``dims`` lists every layer width, input first. Inputs may be a single
    vector or a batch ``(B, dims[0])``.
    """

    def __init__(self, dims, rng=None, out_scale=1.0):
        self.dims = tuple(int(d) for d in dims)
        if len(self.dims) < 2 or min(self.dims) < 1:
            raise ValueError(f"need at least input and output widths >= 1, got {self.dims}")
        rng = np.random.default_rng(rng)
        self.params = []
        n_layers = len(self.dims) - 1
        for i, (fan_in, fan_out) in enumerate(zip(self.dims[:-1], self.dims[1:])):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            if i == n_layers - 1:
                bound *= out_scale
            self.params.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
            self.params.append(np.zeros(fan_out))

    @property
    def n_layers(self):
        return len(self.dims) - 1

    @property
    def n_params(self):
        return sum(p.size for p in self.params)

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dims[0]:
            raise ValueError(f"input width {x.shape[-1]} != {self.dims[0]}")
        acts = [x]
        h = x
        for i in range(self.n_layers):
            W, b = self.params[2 * i], self.params[2 * i + 1]
            z = h @ W + b
            h = np.maximum(z, 0.0) if i < self.n_layers - 1 else z
            acts.append(h)
        return h, acts

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, acts, grad_out):
        """Parameter gradients (same order as ``params``) and the input gradient.

        Batch gradients are summed over the batch axis.
        """
        grads = [None] * len(self.params)
        g = np.asarray(grad_out, dtype=float)
        for i in reversed(range(self.n_layers)):
            h_in = acts[i]
            if i < self.n_layers - 1:
                g = g * (acts[i + 1] > 0)
            W = self.params[2 * i]
            if h_in.ndim == 1:
                grads[2 * i] = np.outer(h_in, g)
                grads[2 * i + 1] = g.copy()
            else:
                grads[2 * i] = h_in.T @ g
                grads[2 * i + 1] = g.sum(axis=0)
            g = g @ W.T
        return grads, g

    def get_flat(self):
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=float)
        if flat.size != self.n_params:
            raise ValueError(f"expected {self.n_params} values, got {flat.size}")
        pos = 0
        for p in self.params:
            p[...] = flat[pos:pos + p.size].reshape(p.shape)
            pos += p.size

    def copy(self):
        other = Mlp.__new__(Mlp)
        other.dims = self.dims
        other.params = [p.copy() for p in self.params]
        return other

    def soft_update(self, source, tau):
        """``self <- tau * source + (1 - tau) * self``."""
        for p, q in zip(self.params, source.params):
            p *= 1.0 - tau
            p += tau * q


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self._buf = [np.empty_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        """Descent step: ``params -= lr * adam_direction(grads)``."""
        self.t += 1
        # bias corrections folded into the step size and epsilon
        c1 = 1.0 - self.beta1 ** self.t
        root_c2 = np.sqrt(1.0 - self.beta2 ** self.t)
        lr_t = self.lr * root_c2 / c1
        eps_t = self.eps * root_c2
        for p, g, m, v, buf in zip(params, grads, self.m, self.v, self._buf):
            m *= self.beta1
            np.multiply(g, 1.0 - self.beta1, out=buf)
            m += buf
            v *= self.beta2
            np.multiply(g, g, out=buf)
            buf *= 1.0 - self.beta2
            v += buf
            np.sqrt(v, out=buf)
            buf += eps_t
            np.divide(m, buf, out=buf)
            buf *= lr_t
            p -= buf


class Sgd:
    def __init__(self, params, lr=1e-3):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


OPTIMIZERS = {"adam": Adam, "sgd": Sgd}


def make_optimizer(name, params, lr):
    try:
        return OPTIMIZERS[name](params, lr=lr)
    except KeyError:
        raise ValueError(f"unknown optimizer {name!r}; choose from {sorted(OPTIMIZERS)}") from None


def softmax(z):
    z = np.asarray(z, dtype=float)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z):
    z = np.asarray(z, dtype=float)
    s = z - z.max(axis=-1, keepdims=True)
    return s - np.log(np.exp(s).sum(axis=-1, keepdims=True))


LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


def gaussian_head(out):
    """Split a ``2A``-wide output into mean and clipped log-std."""
    out = np.asarray(out)
    half = out.shape[-1] // 2
    return out[..., :half], np.clip(out[..., half:], LOG_STD_MIN, LOG_STD_MAX)


def squash_log_prob(u, mean, log_std):
    """Log-density of ``a = tanh(u)`` for ``u ~ N(mean, exp(log_std)^2)``."""
    z = (u - mean) / np.exp(log_std)
    logp = -0.5 * z ** 2 - log_std - HALF_LOG_2PI
    logp = logp - np.log(1.0 - np.tanh(u) ** 2 + 1e-6)
    return logp.sum(axis=-1)
