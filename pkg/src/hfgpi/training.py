"""Training loop, prediction, and the binary checkpoint container."""

from __future__ import annotations

import copy
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig, rng_stream
from .errors import ConfigurationError, NumericError, ParseError, UndefinedMetricError
from .metrics import concordance_index, risk_score
from .model import Params, PreparedCohort, forward, init_params, loss_and_grads
from .optim import AdamW
from .survival import assign_bins, compute_time_bins

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"HFGPICKP"
CHECKPOINT_VERSION = 1


@dataclass
class EpochLog:
    epoch: int
    surv_loss: float
    struct_loss: float
    total_loss: float
    val_cindex: float | None = None


@dataclass
class TrainState:
    config: RunConfig
    params: Params
    bin_edges: np.ndarray
    optimizer: AdamW
    epochs_done: int = 0
    history: list[EpochLog] = field(default_factory=list)
    best_params: Params | None = None
    best_cindex: float | None = None
    best_epoch: int | None = None


def _fresh_state(data: PreparedCohort, config: RunConfig, indices: np.ndarray,
                 stream: tuple[int, ...]) -> TrainState:
    edges = compute_time_bins(data.times[indices], data.censored[indices], config.bins)
    params = init_params(config, data.gene_identity.width, data.protein_identity.width,
                         len(data.protein_identity), stream=stream)
    opt = AdamW(lr=config.lr, weight_decay=config.weight_decay)
    return TrainState(config, params, edges, opt)


def train(data: PreparedCohort, config: RunConfig, indices=None, *, validation=None,
          state: TrainState | None = None, stop_after: int | None = None,
          on_epoch=None, stream: tuple[int, ...] = ()) -> TrainState:
    """AdamW over per-patient losses averaged in windows of ``config.accumulation``.

    The patient order of every epoch is a permutation drawn from the
    ``("shuffle", epoch)`` stream, so resuming from a saved state replays
    the remaining epochs exactly. ``stream`` extends the RNG keys (e.g. with
    a fold index) so parallel runs draw independent streams. When ``validation`` indices are given the
    parameters with the best validation C-index are kept alongside the
    final ones.
    """
    indices = np.arange(len(data)) if indices is None else np.asarray(indices)
    if state is None:
        state = _fresh_state(data, config, indices, stream)
    bins = assign_bins(data.times, state.bin_edges)
    names = list(state.params)
    last_epoch = config.epochs if stop_after is None else min(config.epochs, stop_after)

    for epoch in range(state.epochs_done, last_epoch):
        order = indices[rng_stream(config.seed, "shuffle", *stream, epoch).permutation(indices.size)]
        snapshot = copy.deepcopy(state)  # consistent resume point if this epoch fails
        sums = np.zeros(3)
        for start in range(0, order.size, config.accumulation):
            window = order[start:start + config.accumulation]
            acc = {n: np.zeros_like(state.params[n]) for n in names}
            for k in window:
                result, grads = loss_and_grads(state.params, data, int(k), config, int(bins[k]))
                total = result.loss.item()
                if not np.isfinite(total):
                    raise NumericError(f"non-finite loss at epoch {epoch + 1}, patient {data.sample_ids[k]}",
                                       last_good=snapshot)
                sums += (result.surv_loss, result.struct_loss, total)
                for n in names:
                    acc[n] += grads[n]
            scale = 1.0 / window.size
            try:
                new = state.optimizer.step([state.params[n] for n in names],
                                           [acc[n] * scale for n in names])
            except NumericError as exc:
                raise NumericError(str(exc), last_good=snapshot) from exc
            state.params = dict(zip(names, new))
        means = sums / order.size
        entry = EpochLog(epoch + 1, float(means[0]), float(means[1]), float(means[2]))
        if validation is not None and len(validation):
            try:
                entry.val_cindex = evaluate_cindex(state.params, data, config, validation)
            except UndefinedMetricError:
                entry.val_cindex = None
            if entry.val_cindex is not None and (state.best_cindex is None
                                                 or entry.val_cindex > state.best_cindex):
                state.best_cindex = entry.val_cindex
                state.best_epoch = epoch + 1
                state.best_params = {n: v.copy() for n, v in state.params.items()}
        state.history.append(entry)
        state.epochs_done = epoch + 1
        log.info("epoch %d/%d surv=%.4f struct=%.4f total=%.4f", epoch + 1, config.epochs,
                 entry.surv_loss, entry.struct_loss, entry.total_loss)
        if on_epoch is not None:
            on_epoch(state)
    return state


@dataclass
class Prediction:
    hazards: np.ndarray     # patients x bins
    risks: np.ndarray
    attention: list[np.ndarray | None]
    incidences: list


def predict(params: Params, data: PreparedCohort, config: RunConfig, indices=None,
            keep_details: bool = False) -> Prediction:
    indices = np.arange(len(data)) if indices is None else np.asarray(indices)
    hazards, attention, incidences = [], [], []
    for k in indices:
        res = forward(params, data, int(k), config, with_struct=False)
        hazards.append(res.hazards)
        if keep_details:
            attention.append(res.attention)
            incidences.append(res.incidence)
    hz = np.array(hazards)
    return Prediction(hz, np.array([risk_score(h) for h in hz]), attention, incidences)


def evaluate_cindex(params: Params, data: PreparedCohort, config: RunConfig, indices) -> float:
    pred = predict(params, data, config, indices)
    idx = np.asarray(indices)
    return concordance_index(pred.risks, data.times[idx], data.censored[idx])


def mean_structure_loss(params: Params, data: PreparedCohort, config: RunConfig, indices=None) -> float:
    """Structure loss of the current attention averaged over patients (measurement only)."""
    if "genomic" not in config.modalities:
        raise ConfigurationError("structure loss needs the genomic modality")
    indices = np.arange(len(data)) if indices is None else np.asarray(indices)
    vals = [forward(params, data, int(k), config, with_struct=True).struct_loss for k in indices]
    return float(np.mean(vals))


# ---------------------------------------------------------------------------
# checkpoint container
#
# magic(8) | version u32 | seed u64 | meta_len u64 | meta JSON | n_tensors u64 |
# per tensor: name_len u64 | name | rows u64 | cols u64 | rows*cols f64
# all integers and reals little-endian


def _pack_tensor(name: str, value: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(np.atleast_2d(value), dtype="<f8")
    raw = name.encode("utf-8")
    return (struct.pack("<Q", len(raw)) + raw + struct.pack("<QQ", *arr.shape) + arr.tobytes())


def save_checkpoint(state: TrainState, path) -> Path:
    path = Path(path)
    meta = {
        "config": state.config.to_dict(),
        "epochs_done": state.epochs_done,
        "optimizer_step": state.optimizer.step_count,
        "history": [vars(h) for h in state.history],
        "best_cindex": state.best_cindex,
        "best_epoch": state.best_epoch,
        "param_names": list(state.params),
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    tensors = [("bin_edges", state.bin_edges.reshape(1, -1))]
    tensors += [(f"param.{n}", v) for n, v in state.params.items()]
    if state.optimizer.first_moment:
        for n, m, v in zip(state.params, state.optimizer.first_moment, state.optimizer.second_moment):
            tensors += [(f"adam_m.{n}", m), (f"adam_v.{n}", v)]
    if state.best_params is not None:
        tensors += [(f"best.{n}", v) for n, v in state.best_params.items()]
    out = bytearray(CHECKPOINT_MAGIC)
    out += struct.pack("<IQQ", CHECKPOINT_VERSION, state.config.seed, len(blob)) + blob
    out += struct.pack("<Q", len(tensors))
    for name, value in tensors:
        out += _pack_tensor(name, value)
    path.write_bytes(bytes(out))
    return path


def load_checkpoint(path) -> TrainState:
    path = Path(path)
    if not path.exists():
        raise ParseError(f"{path}: checkpoint not found")
    data = path.read_bytes()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise ParseError(f"{path}: truncated at byte {pos}, needed {n} more bytes")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    if take(8) != CHECKPOINT_MAGIC:
        raise ParseError(f"{path}: byte 0: not a checkpoint (bad magic)")
    version, seed, meta_len = struct.unpack("<IQQ", take(20))
    if version != CHECKPOINT_VERSION:
        raise ParseError(f"{path}: byte 8: unsupported checkpoint version {version}")
    meta = json.loads(take(meta_len).decode("utf-8"))
    (count,) = struct.unpack("<Q", take(8))
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<Q", take(8))
        name = take(nlen).decode("utf-8")
        rows, cols = struct.unpack("<QQ", take(16))
        tensors[name] = np.frombuffer(take(8 * rows * cols), dtype="<f8").reshape(rows, cols).astype(np.float64)
    if pos != len(data):
        raise ParseError(f"{path}: {len(data) - pos} trailing bytes after byte {pos}")

    cfg = meta["config"]
    cfg["modalities"] = tuple(cfg["modalities"])
    config = RunConfig.from_dict(cfg)
    if config.seed != seed:
        raise ParseError(f"{path}: header seed {seed} disagrees with config seed {config.seed}")
    names = meta["param_names"]
    params = {n: tensors[f"param.{n}"] for n in names}
    opt = AdamW(lr=config.lr, weight_decay=config.weight_decay, step_count=meta["optimizer_step"])
    if f"adam_m.{names[0]}" in tensors:
        opt.first_moment = [tensors[f"adam_m.{n}"] for n in names]
        opt.second_moment = [tensors[f"adam_v.{n}"] for n in names]
    best = {n: tensors[f"best.{n}"] for n in names} if f"best.{names[0]}" in tensors else None
    return TrainState(
        config=config,
        params=params,
        bin_edges=tensors["bin_edges"].reshape(-1),
        optimizer=opt,
        epochs_done=meta["epochs_done"],
        history=[EpochLog(**h) for h in meta["history"]],
        best_params=best,
        best_cindex=meta["best_cindex"],
        best_epoch=meta["best_epoch"],
    )
