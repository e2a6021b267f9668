"""Independent reference computations used by the tests.

Nothing here touches the tape or the package's vectorised sweep code.
"""

import math

import numpy as np


def central_diff(f, x, h=1e-5):
    return (f(x + h) - f(x - h)) / (2 * h)


def grad_fd(f, theta, h=1e-4):
    theta = np.asarray(theta, dtype=np.float64)
    out = np.empty_like(theta)
    for i in range(theta.size):
        tp, tm = theta.copy(), theta.copy()
        tp[i] += h
        tm[i] -= h
        out[i] = (f(tp) - f(tm)) / (2 * h)
    return out


def mixed_fd(f, a, b, h=1e-4):
    """d^2 f / da db for a scalar function of two scalars, nested central differences."""
    def dfa(bb):
        return (f(a + h, bb) - f(a - h, bb)) / (2 * h)
    return (dfa(b + h) - dfa(b - h)) / (2 * h)


def loop_scores(model, X):
    """Plain-python MLP evaluation, one example and one unit at a time."""
    act = {"tanh": math.tanh,
           "softplus": lambda z: math.log1p(math.exp(-abs(z))) + max(z, 0.0),
           "relu": lambda z: max(z, 0.0)}[model.hidden_activation.value]
    out = []
    for x in np.asarray(X, dtype=np.float64):
        h = [float(v) for v in x]
        for li, (w, b) in enumerate(zip(model.weights, model.biases)):
            z = [sum(h[i] * w[i, j] for i in range(len(h))) + b[j] for j in range(w.shape[1])]
            h = z if li == len(model.weights) - 1 else [act(v) for v in z]
        out.append(h[0])
    return np.array(out)


def brute_force_deltas(score_one, X, k, low, high, resolution, direction=1, tol=1e-9):
    """delta_i by explicit per-sample, per-segment loops."""
    step = (high - low) / resolution
    grid = [low + i * step for i in range(resolution)]
    deltas = []
    for x in np.asarray(X, dtype=np.float64):
        ok = 1
        prev = None
        for g in grid:
            z = x.copy()
            z[k] = g
            cur = direction * score_one(z)
            if prev is not None and cur - prev < -tol:
                ok = 0
            prev = cur
        deltas.append(ok)
    return np.array(deltas)


def pairwise_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))
