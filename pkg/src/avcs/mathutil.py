"""Small shared numeric helpers."""

from __future__ import annotations

import numpy as np


def sigmoid(z):
    """Overflow-safe logistic function for scalars or arrays."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)
