"""Pure numpy kernel core.

Every routine takes a kernel flattened to ``coefs``: a Gaussian with
bandwidth ``theta`` contributes the factor ``exp(-d**2 * c)`` with
``c = 1 / (2 * theta**2)``, and a product kernel multiplies its factors.
The compiled core in ``_kernels_c.pyx`` mirrors these signatures.
"""
import numpy as np

_CHUNK = 2048


def _apply(d2, coefs):
    out = np.exp(-d2 * coefs[0])
    for c in coefs[1:]:
        out *= np.exp(-d2 * c)
    return out


def gram(points, coefs):
    points = np.ascontiguousarray(points, dtype=np.float64)
    diff = points[:, None] - points[None, :]
    # (s - t)**2 == (t - s)**2 in IEEE arithmetic, so the result is exactly symmetric
    return _apply(diff * diff, coefs)


def cross_gram(s, t, coefs):
    s = np.ascontiguousarray(s, dtype=np.float64)
    t = np.ascontiguousarray(t, dtype=np.float64)
    diff = s[:, None] - t[None, :]
    return _apply(diff * diff, coefs)


def expansion(s, knots, coefs, weights):
    """Evaluate ``sum_k weights[k] * K(s, knots[k])`` for each ``s``.

    ``weights`` may be 2-d (knots x functions) to evaluate several
    expansions sharing the same knots and kernel at once.
    """
    s = np.ascontiguousarray(s, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    out = np.empty((s.shape[0],) + weights.shape[1:])
    for start in range(0, s.shape[0], _CHUNK):
        block = cross_gram(s[start:start + _CHUNK], knots, coefs)
        out[start:start + _CHUNK] = block @ weights
    return out
