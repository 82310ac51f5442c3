"""Small dense networks over a flat weight vector, with manual backprop.

Layout of the flat vector: for every layer, the weight matrix (out x in,
row-major) followed by its bias (out,).
"""

from dataclasses import dataclass
import math

import numpy as np

Z_DEFAULT = 4.0
SLOPE_DEFAULT = 0.01


@dataclass(frozen=True)
class MlpArchitecture:
    widths: tuple
    slope: float = SLOPE_DEFAULT

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        if len(widths) < 3:
            raise ValueError("need an input layer, at least one hidden layer and an output layer")
        if any(w < 1 for w in widths):
            raise ValueError("layer widths must be positive")
        if widths[-1] < 2:
            raise ValueError("need at least two output classes")
        object.__setattr__(self, "widths", widths)

    @property
    def n_classes(self):
        return self.widths[-1]

    @property
    def n_inputs(self):
        return self.widths[0]

    @property
    def shapes(self):
        return [(n_out, n_in) for n_in, n_out in zip(self.widths[:-1], self.widths[1:])]

    @property
    def n_params(self):
        return sum(o * i + o for o, i in self.shapes)

    def unpack(self, weights):
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} weights, got shape {weights.shape}")
        layers = []
        pos = 0
        for n_out, n_in in self.shapes:
            mat = weights[pos : pos + n_out * n_in].reshape(n_out, n_in)
            pos += n_out * n_in
            bias = weights[pos : pos + n_out]
            pos += n_out
            layers.append((mat, bias))
        return layers

    def init_weights(self, rng):
        """He-style normal initialization with zero biases."""
        parts = []
        for n_out, n_in in self.shapes:
            parts.append(rng.normal(0.0, math.sqrt(2.0 / n_in), size=n_out * n_in))
            parts.append(np.zeros(n_out))
        return np.concatenate(parts)


@dataclass(frozen=True)
class LabeledDataset:
    x: np.ndarray
    y: np.ndarray
    split: str = "full"

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=np.float64))
        y = np.asarray(self.y).astype(np.int64).ravel()
        if x.shape[0] != y.shape[0]:
            raise ValueError("features and labels disagree on the number of examples")
        if y.size and y.min() < 0:
            raise ValueError("labels must be nonnegative class indices")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return self.y.shape[0]

    def subset(self, idx, split=None):
        return LabeledDataset(self.x[idx], self.y[idx], split or self.split)


# ------------------------------------------------------------ model


def _leaky(z, slope):
    return np.where(z > 0, z, slope * z)


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(arch, weights, x):
    """Class probabilities (n, K) for inputs x (n, d_in)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != arch.n_inputs:
        raise ValueError(f"expected {arch.n_inputs} features, got {x.shape[1]}")
    act = x
    layers = arch.unpack(weights)
    for mat, bias in layers[:-1]:
        act = _leaky(act @ mat.T + bias, arch.slope)
    mat, bias = layers[-1]
    return _softmax(act @ mat.T + bias)


def _check_z(z):
    # below ln 2 the floor exceeds one half and the loss leaves [0, 1]
    if not z > math.log(2.0):
        raise ValueError(f"z must exceed ln 2, got {z}")


def bounded_ce_loss(probs, y, z=Z_DEFAULT):
    """-(1/z) ln(e^{-z} + (1 - 2 e^{-z}) p_y), elementwise over examples."""
    _check_z(z)
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64).ravel()
    p_y = probs[np.arange(y.size), y]
    floor = math.exp(-z)
    return -np.log(floor + (1.0 - 2.0 * floor) * p_y) / z


def backward(arch, weights, x, y, z=Z_DEFAULT):
    """Gradient of the mean bounded cross-entropy over the batch."""
    _check_z(z)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64).ravel()
    n = y.size
    if n == 0:
        raise ValueError("batch must be nonempty")
    layers = arch.unpack(weights)
    inputs = [x]
    pre = []
    act = x
    for mat, bias in layers[:-1]:
        zl = act @ mat.T + bias
        pre.append(zl)
        act = _leaky(zl, arch.slope)
        inputs.append(act)
    mat, bias = layers[-1]
    probs = _softmax(act @ mat.T + bias)
    rows = np.arange(n)
    p_y = probs[rows, y]
    floor = math.exp(-z)
    scale = 1.0 - 2.0 * floor
    phi = floor + scale * p_y
    # d loss / d p_y, then through the softmax: d p_y / d logits = p_y (e_y - p)
    coef = -(scale / (z * phi)) * p_y / n
    delta = -coef[:, None] * probs
    delta[rows, y] += coef
    grads = []
    for li in range(len(layers) - 1, -1, -1):
        mat, _ = layers[li]
        grads.append((delta.T @ inputs[li], delta.sum(axis=0)))
        if li > 0:
            delta = delta @ mat
            delta = delta * np.where(pre[li - 1] > 0, 1.0, arch.slope)
    flat = []
    for g_mat, g_bias in reversed(grads):
        flat.append(g_mat.ravel())
        flat.append(g_bias)
    return np.concatenate(flat)


def sample_weights(mean, sigma2, rng):
    """Draw h = mean + eps with eps ~ N(0, sigma2 I); returns (h, eps)."""
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    mean = np.asarray(mean, dtype=np.float64)
    eps = rng.normal(0.0, math.sqrt(sigma2), size=mean.shape)
    return mean + eps, eps


def risks(arch, weights, dataset, z=Z_DEFAULT):
    """(zero-one risk, bounded cross-entropy risk) of one network on a dataset."""
    if len(dataset) == 0:
        raise ValueError("dataset must be nonempty")
    probs = forward(arch, weights, dataset.x)
    zero_one = float(np.mean(np.argmax(probs, axis=1) != dataset.y))
    bounded = float(np.mean(bounded_ce_loss(probs, dataset.y, z)))
    return zero_one, bounded


# ------------------------------------------------------------ data


def make_blobs(n, n_features, n_classes, rng, spread=1.0, separation=3.0):
    """Isotropic Gaussian clusters with random centers, labels balanced."""
    centers = rng.normal(0.0, separation, size=(n_classes, n_features))
    y = np.arange(n) % n_classes
    rng.shuffle(y)
    x = centers[y] + rng.normal(0.0, spread, size=(n, n_features))
    return LabeledDataset(x, y)


def make_moons(n, rng, noise=0.1):
    """Two interleaved half circles."""
    y = np.arange(n) % 2
    rng.shuffle(y)
    angle = rng.uniform(0.0, math.pi, size=n)
    x = np.where(
        y[:, None] == 0,
        np.stack([np.cos(angle), np.sin(angle)], axis=1),
        np.stack([1.0 - np.cos(angle), 0.5 - np.sin(angle)], axis=1),
    )
    x = x + rng.normal(0.0, noise, size=x.shape)
    return LabeledDataset(x, y)


def load_csv(path):
    """Feature columns followed by an integer label column; a header row is optional.

    Labels are re-encoded to 0..K-1 in sorted order.
    """
    with open(path) as fh:
        first = fh.readline()
    try:
        [float(v) for v in first.strip().split(",")]
        skip = 0
    except ValueError:
        skip = 1
    data = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    if data.shape[1] < 2:
        raise ValueError(f"{path}: need at least one feature column and a label column")
    raw = data[:, -1]
    if not np.all(raw == np.round(raw)):
        raise ValueError(f"{path}: the last column must hold integer labels")
    _, y = np.unique(raw.astype(np.int64), return_inverse=True)
    return LabeledDataset(data[:, :-1], y)


def split_dataset(dataset, sizes, rng):
    """Disjoint random splits named prior, posterior and test."""
    names = ("prior", "posterior", "test")
    if len(sizes) != 3 or sum(sizes) > len(dataset):
        raise ValueError(f"split sizes {sizes} do not fit {len(dataset)} examples")
    order = rng.permutation(len(dataset))
    out = []
    start = 0
    for name, size in zip(names, sizes):
        out.append(dataset.subset(order[start : start + size], name))
        start += size
    return tuple(out)
