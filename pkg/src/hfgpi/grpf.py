"""Gene-regulated protein fusion: proteins attend over genes.

Proteins supply the queries and genes the keys/values, so the co-attention
matrix ``T`` is proteins x genes and row-stochastic. A structure loss asks
``T^T C_p T`` to reproduce the gene cost matrix ``C_g``.
"""

from __future__ import annotations

import math

from . import autodiff as ad
from .errors import DimensionError


def cross_attention(x_p, x_g, w_q: ad.Tensor, w_k: ad.Tensor, w_v: ad.Tensor
                    ) -> tuple[ad.Tensor, ad.Tensor]:
    """Return ``(T, T V)`` for protein tokens ``x_p`` and gene tokens ``x_g``."""
    x_p, x_g = ad.constant(x_p), ad.constant(x_g)
    if x_p.shape[1] != w_q.shape[0]:
        raise DimensionError(f"W_Q expects width {w_q.shape[0]}, protein tokens have {x_p.shape[1]}")
    for label, w in (("W_K", w_k), ("W_V", w_v)):
        if x_g.shape[1] != w.shape[0]:
            raise DimensionError(f"{label} expects width {w.shape[0]}, gene tokens have {x_g.shape[1]}")
    if not (w_q.shape[1] == w_k.shape[1] == w_v.shape[1]):
        raise DimensionError(
            f"projection widths differ: W_Q {w_q.shape}, W_K {w_k.shape}, W_V {w_v.shape}")
    d = w_q.shape[1]
    q = x_p @ w_q
    k = x_g @ w_k
    v = x_g @ w_v
    t = ad.row_softmax(ad.scale(q @ k.T, 1.0 / math.sqrt(d)))
    return t, t @ v


def structure_loss(t, c_g, c_p) -> ad.Tensor:
    """``||C_g - T^T C_p T||_F^2 / (N_g N_p)``."""
    t = ad.constant(t)
    n_p, n_g = t.shape
    if ad.constant(c_g).shape != (n_g, n_g) or ad.constant(c_p).shape != (n_p, n_p):
        raise DimensionError(
            f"structure_loss: T is {t.shape}, C_g {ad.constant(c_g).shape}, C_p {ad.constant(c_p).shape}")
    resid = ad.sub(c_g, t.T @ ad.matmul(c_p, t))
    return ad.scale(ad.frobenius_sq(resid), 1.0 / (n_g * n_p))


def regulate(x_p, context) -> ad.Tensor:
    x_p, context = ad.constant(x_p), ad.constant(context)
    if x_p.shape != context.shape:
        raise DimensionError(f"regulate: tokens {x_p.shape} vs context {context.shape}")
    return x_p + context
