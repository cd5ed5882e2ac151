"""Transformer encoder, gated attention pooling, discrete hazards and the NLL."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigurationError, DimensionError

EPS = 1e-7


@dataclass
class EncoderLayer:
    ln1_gamma: ad.Tensor
    ln1_beta: ad.Tensor
    w_q: ad.Tensor
    w_k: ad.Tensor
    w_v: ad.Tensor
    w_o: ad.Tensor
    ln2_gamma: ad.Tensor
    ln2_beta: ad.Tensor
    w_1: ad.Tensor
    b_1: ad.Tensor
    w_2: ad.Tensor
    b_2: ad.Tensor
    heads: int = 4


def multi_head_self_attention(x: ad.Tensor, layer: EncoderLayer) -> ad.Tensor:
    d = x.shape[1]
    if d % layer.heads:
        raise DimensionError(f"width {d} is not divisible by {layer.heads} heads")
    dh = d // layer.heads
    q, k, v = x @ layer.w_q, x @ layer.w_k, x @ layer.w_v
    outs = []
    for h in range(layer.heads):
        sl = slice(h * dh, (h + 1) * dh)
        qh = ad.slice_cols(q, sl.start, sl.stop)
        kh = ad.slice_cols(k, sl.start, sl.stop)
        vh = ad.slice_cols(v, sl.start, sl.stop)
        att = ad.row_softmax(ad.scale(qh @ kh.T, 1.0 / math.sqrt(dh)))
        outs.append(att @ vh)
    merged = outs[0] if len(outs) == 1 else ad.concat_cols(outs)
    return merged @ layer.w_o


def transformer_encode(f, layers: list[EncoderLayer]) -> ad.Tensor:
    """Pre-norm encoder without positional encoding (tokens form a set)."""
    x = ad.constant(f)
    if x.shape[0] < 1:
        raise DimensionError("encoder needs at least one token")
    for layer in layers:
        if x.shape[1] != layer.w_q.shape[0]:
            raise DimensionError(f"encoder width {layer.w_q.shape[0]} != token width {x.shape[1]}")
        x = x + multi_head_self_attention(ad.layer_norm(x, layer.ln1_gamma, layer.ln1_beta), layer)
        hidden = ad.relu(ad.layer_norm(x, layer.ln2_gamma, layer.ln2_beta) @ layer.w_1 + layer.b_1)
        x = x + (hidden @ layer.w_2 + layer.b_2)
    return x


def gated_attention_pool(tokens, v: ad.Tensor, u: ad.Tensor, w: ad.Tensor
                         ) -> tuple[ad.Tensor, ad.Tensor]:
    """Gated attention pooling in the ABMIL style.

    Returns the pooled ``1 x d`` embedding and the ``1 x N`` weights.
    """
    tokens = ad.constant(tokens)
    gate = ad.tanh(tokens @ v) * ad.sigmoid(tokens @ u)
    weights = ad.row_softmax((gate @ w).T)
    return weights @ tokens, weights


def predict_hazards(h, weight: ad.Tensor, bias: ad.Tensor) -> ad.Tensor:
    if weight.shape[1] < 2:
        raise ConfigurationError("need at least two time bins")
    return ad.sigmoid(ad.constant(h) @ weight + bias)


def survival_curve(hazards) -> ad.Tensor:
    """``S(t) = prod_{u<=t} (1 - h(u))`` as a ``1 x B`` row."""
    hazards = ad.constant(hazards)
    keep = 1.0 - hazards
    cols = [ad.slice_cols(keep, 0, 1)]
    for t in range(1, hazards.shape[1]):
        cols.append(cols[-1] * ad.slice_cols(keep, t, t + 1))
    return ad.concat_cols(cols)


def survival_numpy(hazards: np.ndarray) -> np.ndarray:
    return np.cumprod(1.0 - np.asarray(hazards, dtype=np.float64), axis=-1)


def nll_loss(hazards, time_bin: int, censored: bool) -> ad.Tensor:
    """Discrete-time NLL of one patient (censored=True means follow-up ended alive).

    censored:   -log S(t)
    uncensored: -log S(t-1) - log h(t), with S(-1) = 1
    """
    hazards = ad.constant(hazards)
    b = hazards.shape[1]
    if not 0 <= time_bin < b:
        raise ConfigurationError(f"time bin {time_bin} outside [0, {b})")

    def safe_log(p):
        return ad.log(ad.clip(p, EPS, 1.0 - EPS))

    surv = survival_curve(hazards)
    if censored:
        return -safe_log(ad.slice_cols(surv, time_bin, time_bin + 1))
    loss = -safe_log(ad.slice_cols(hazards, time_bin, time_bin + 1))
    if time_bin > 0:
        loss = loss - safe_log(ad.slice_cols(surv, time_bin - 1, time_bin))
    return loss


def total_loss(surv, struct, lam: float) -> ad.Tensor:
    surv = ad.constant(surv)
    if lam == 0.0:
        return surv
    return surv + ad.scale(ad.constant(struct), lam)


def compute_time_bins(times, censored, n_bins: int) -> np.ndarray:
    """Interior bin edges at quantiles of the uncensored event times.

    Returns ``n_bins - 1`` edges; bin ``b`` covers ``[edge[b-1], edge[b])``
    with the first bin starting at 0 and the last one open-ended.
    """
    if n_bins < 2:
        raise ConfigurationError(f"need at least 2 time bins, got {n_bins}")
    times = np.asarray(times, dtype=np.float64)
    events = times[~np.asarray(censored, dtype=bool)]
    if np.unique(events).size < n_bins:
        raise ConfigurationError(
            f"only {np.unique(events).size} distinct event times for {n_bins} bins; use fewer bins")
    return np.quantile(events, np.arange(1, n_bins) / n_bins)


def assign_bins(times, edges: np.ndarray) -> np.ndarray:
    return np.searchsorted(np.asarray(edges), np.asarray(times, dtype=np.float64), side="right")
