"""Hot numeric kernels with two interchangeable backends.

The training loop spends nearly all of its time in the handful of functions
defined here (dense-layer forward/backward, row softmax, cross-entropy,
SGD update). Each has a numba ``@njit`` implementation and a pure-numpy
twin. The active backend is chosen once at import time:

    PCTLAB_BACKEND=numba   force numba (error if unavailable)
    PCTLAB_BACKEND=numpy   force the pure-numpy path
    unset / "auto"         numba when importable, else numpy

Both backends are deterministic run-to-run. They agree to floating-point
roundoff (last-bit reduction-order differences), not bitwise, so seeds are
only reproducible within one backend.

Shape conventions: batches are row-major ``(n, dim)`` float64 arrays,
weights are ``(fan_in, fan_out)``, biases ``(fan_out,)``, labels int64.
"""

import os

import numpy as np

# ---------------------------------------------------------------------------
# pure-numpy implementations


def _np_affine(x, w, b):
    """z = x @ w + b for a batch of rows."""
    return x @ w + b


def _np_relu(z):
    return np.maximum(z, 0.0)


def _np_relu_backward(da, z):
    """Gradient through relu: pass where the pre-activation was positive."""
    return da * (z > 0.0)


def _np_affine_backward(dz, x, w):
    """Gradients of z = x @ w + b: returns (dw, db, dx)."""
    dw = x.T @ dz
    db = dz.sum(axis=0)
    dx = dz @ w.T
    return dw, db, dx


def _np_softmax_rows(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _np_ce_rows(logits, labels):
    """Per-row cross-entropy and softmax probabilities.

    Returns (losses, probs); probs are reused by callers to assemble the
    gradient softmax(logits) - onehot(label).
    """
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    s = e.sum(axis=1, keepdims=True)
    probs = e / s
    lse = m[:, 0] + np.log(s[:, 0])
    losses = lse - logits[np.arange(logits.shape[0]), labels]
    return losses, probs


def _np_sgd_update(param, vel, grad, lr, mu):
    """In-place momentum step on flat views: v <- mu*v - lr*g; p += v."""
    vel *= mu
    vel -= lr * grad
    param += vel


def _np_argmax_rows(logits):
    return np.argmax(logits, axis=1)


_NUMPY_IMPLS = {
    "affine": _np_affine,
    "relu": _np_relu,
    "relu_backward": _np_relu_backward,
    "affine_backward": _np_affine_backward,
    "softmax_rows": _np_softmax_rows,
    "ce_rows": _np_ce_rows,
    "sgd_update": _np_sgd_update,
    "argmax_rows": _np_argmax_rows,
}

# ---------------------------------------------------------------------------
# numba implementations

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via PCTLAB_BACKEND=numpy
    HAVE_NUMBA = False

if HAVE_NUMBA:

    @njit(cache=True)
    def _nb_affine(x, w, b):
        z = np.dot(x, w)
        for i in range(z.shape[0]):
            for j in range(z.shape[1]):
                z[i, j] += b[j]
        return z

    @njit(cache=True)
    def _nb_relu(z):
        a = np.empty_like(z)
        for i in range(z.shape[0]):
            for j in range(z.shape[1]):
                v = z[i, j]
                a[i, j] = v if v > 0.0 else 0.0
        return a

    @njit(cache=True)
    def _nb_relu_backward(da, z):
        dz = np.empty_like(da)
        for i in range(da.shape[0]):
            for j in range(da.shape[1]):
                dz[i, j] = da[i, j] if z[i, j] > 0.0 else 0.0
        return dz

    @njit(cache=True)
    def _nb_affine_backward(dz, x, w):
        dw = np.dot(np.ascontiguousarray(x.T), dz)
        db = np.zeros(dz.shape[1])
        for i in range(dz.shape[0]):
            for j in range(dz.shape[1]):
                db[j] += dz[i, j]
        dx = np.dot(dz, np.ascontiguousarray(w.T))
        return dw, db, dx

    @njit(cache=True)
    def _nb_softmax_rows(logits):
        n, k = logits.shape
        out = np.empty((n, k))
        for i in range(n):
            m = logits[i, 0]
            for j in range(1, k):
                if logits[i, j] > m:
                    m = logits[i, j]
            s = 0.0
            for j in range(k):
                e = np.exp(logits[i, j] - m)
                out[i, j] = e
                s += e
            inv = 1.0 / s
            for j in range(k):
                out[i, j] *= inv
        return out

    @njit(cache=True)
    def _nb_ce_rows(logits, labels):
        n, k = logits.shape
        losses = np.empty(n)
        probs = np.empty((n, k))
        for i in range(n):
            m = logits[i, 0]
            for j in range(1, k):
                if logits[i, j] > m:
                    m = logits[i, j]
            s = 0.0
            for j in range(k):
                e = np.exp(logits[i, j] - m)
                probs[i, j] = e
                s += e
            inv = 1.0 / s
            for j in range(k):
                probs[i, j] *= inv
            losses[i] = m + np.log(s) - logits[i, labels[i]]
        return losses, probs

    @njit(cache=True)
    def _nb_sgd_update(param, vel, grad, lr, mu):
        for i in range(param.shape[0]):
            vel[i] = mu * vel[i] - lr * grad[i]
            param[i] += vel[i]

    @njit(cache=True)
    def _nb_argmax_rows(logits):
        n, k = logits.shape
        out = np.empty(n, dtype=np.int64)
        for i in range(n):
            best = 0
            bv = logits[i, 0]
            for j in range(1, k):
                if logits[i, j] > bv:
                    bv = logits[i, j]
                    best = j
            out[i] = best
        return out

    _NUMBA_IMPLS = {
        "affine": _nb_affine,
        "relu": _nb_relu,
        "relu_backward": _nb_relu_backward,
        "affine_backward": _nb_affine_backward,
        "softmax_rows": _nb_softmax_rows,
        "ce_rows": _nb_ce_rows,
        "sgd_update": _nb_sgd_update,
        "argmax_rows": _nb_argmax_rows,
    }
else:
    _NUMBA_IMPLS = None

# ---------------------------------------------------------------------------
# backend selection

KERNEL_NAMES = tuple(sorted(_NUMPY_IMPLS))


def _resolve_backend(requested: str) -> str:
    requested = requested.strip().lower()
    if requested in ("", "auto"):
        return "numba" if HAVE_NUMBA else "numpy"
    if requested == "numpy":
        return "numpy"
    if requested == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError(
                "PCTLAB_BACKEND=numba requested but numba is not importable")
        return "numba"
    raise ValueError(
        f"unknown PCTLAB_BACKEND {requested!r}; expected auto, numba or numpy")


BACKEND = _resolve_backend(os.environ.get("PCTLAB_BACKEND", "auto"))


def impls(backend: str) -> dict:
    """Implementation table for a named backend (used by tests and the
    backend benchmark); independent of the active selection."""
    if backend == "numpy":
        return _NUMPY_IMPLS
    if backend == "numba":
        if _NUMBA_IMPLS is None:
            raise RuntimeError("numba backend unavailable")
        return _NUMBA_IMPLS
    raise ValueError(f"unknown backend {backend!r}")


def available_backends() -> tuple:
    return ("numpy", "numba") if HAVE_NUMBA else ("numpy",)


_ACTIVE = impls(BACKEND)

affine = _ACTIVE["affine"]
relu = _ACTIVE["relu"]
relu_backward = _ACTIVE["relu_backward"]
affine_backward = _ACTIVE["affine_backward"]
softmax_rows = _ACTIVE["softmax_rows"]
ce_rows = _ACTIVE["ce_rows"]
sgd_update = _ACTIVE["sgd_update"]
argmax_rows = _ACTIVE["argmax_rows"]
