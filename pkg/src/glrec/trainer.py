"""Training orchestration: config, loop, metrics, checkpoints.

Per epoch: (resample anchors if anchor_rate > 0) -> shuffle train triples ->
for each batch: refine target rows -> build subgraph -> HGNN forward ->
readout -> predict -> hybrid loss -> backward -> Adam step. Validation RMSE
drives early stopping; the best parameters are checkpointed. Everything is
deterministic under (seed, config): RNG substreams are keyed, evaluation
batches are never shuffled, and checkpoints round-trip bit-exactly.
"""

from __future__ import annotations

import dataclasses
import json
import os
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .data import DatasetBundle, build_bundle, build_graph, load_links, load_ratings
from .engine import Tape, Tensor, backward
from .graph import HeteroGlobalGraph, NodeKind, RatingScale
from .learner import METRICS, WEIGHTED_COSINE, OpCounter, sample_anchors
from .losses import LossWeights, graph_learner_loss, hybrid_loss, rating_loss
from .model import ModelParams, forward_batch, init_model
from .optim import AdamState, adam_step, l2_penalty
from . import engine as eg

_CKPT_MAGIC = b"GLRC"
_CKPT_VERSION = 1


@dataclass
class TrainConfig:
    dim: int = 64
    batch: int = 128
    lr: float = 0.001
    dropout: float = 0.4
    layers: int = 2
    trunc: int = 40
    perspectives: int = 1
    lambda_w: float = 0.5
    metric: str = WEIGHTED_COSINE
    k_i: int = 20
    anchor_rate: float = 0.0   # 0 = full GL
    beta: float = 1.0
    beta1: float = 0.1
    beta2: float = 0.1
    gamma_u: float = 0.1
    gamma_v: float = 0.1
    eta: float = 1e-4
    epochs: int = 30
    seed: int = 0
    patience: int = 10
    gl_mode: str = "on"        # "off" disables refinement and the GL losses

    def __post_init__(self):
        if self.dim < 1 or self.batch < 1 or self.layers < 1 or self.trunc < 1 or self.perspectives < 1:
            raise ValueError("dim, batch, layers, trunc, perspectives must all be >= 1")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if not 0.0 <= self.lambda_w <= 1.0:
            raise ValueError(f"lambda_w must be in [0, 1], got {self.lambda_w}")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}, got {self.metric!r}")
        if self.k_i < 0:
            raise ValueError(f"k_i must be >= 0, got {self.k_i}")
        if not 0.0 <= self.anchor_rate <= 1.0:
            raise ValueError(f"anchor_rate must be in [0, 1], got {self.anchor_rate}")
        if self.epochs < 1 or self.patience < 1:
            raise ValueError("epochs and patience must be >= 1")
        if self.gl_mode not in ("on", "off"):
            raise ValueError(f"gl_mode must be 'on' or 'off', got {self.gl_mode!r}")

    def loss_weights(self) -> LossWeights:
        return LossWeights(self.beta, self.beta1, self.beta2, self.gamma_u, self.gamma_v, self.eta)


@dataclass
class MetricsReport:
    rmse: float
    mae: float
    n_evaluated: int
    n_cold: int
    seconds: float
    sim_ops: int


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    seconds: float
    sim_ops: int
    valid: MetricsReport


@dataclass
class TrainedState:
    """A model plus everything needed to evaluate it."""

    config: TrainConfig
    params: ModelParams
    bundle: DatasetBundle
    graph: HeteroGlobalGraph
    ratings_path: str
    links_path: str


@dataclass
class TrainResult:
    state: TrainedState
    checkpoint_path: str
    epochs: list[EpochRecord]
    best_epoch: int
    test: MetricsReport


def compute_metrics(predictions: np.ndarray, targets: np.ndarray) -> tuple[float, float]:
    """(RMSE, MAE) over aligned prediction/target arrays."""
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if predictions.shape != targets.shape or predictions.size == 0:
        raise ValueError(f"metrics need matching nonempty arrays, got {predictions.shape} vs {targets.shape}")
    err = predictions - targets
    return float(np.sqrt(np.mean(err * err))), float(np.mean(np.abs(err)))


def _batches(n: int, size: int):
    for start in range(0, n, size):
        yield np.arange(start, min(start + size, n))


def prepare_state(config: TrainConfig, ratings_path: str, links_path: str) -> TrainedState:
    """Load data, build the global graph, and initialize parameters."""
    bundle = build_bundle(load_ratings(ratings_path), load_links(links_path), seed=config.seed)
    graph = build_graph(bundle, config.k_i)
    params = init_model(
        bundle.n_users,
        bundle.n_items,
        bundle.scale.K,
        config.dim,
        config.layers,
        config.metric,
        config.perspectives,
        config.seed,
    )
    return TrainedState(config, params, bundle, graph, str(ratings_path), str(links_path))


def evaluate_state(state: TrainedState, which: str = "test") -> MetricsReport:
    """Clamped, dropout-free evaluation over one split, in fixed batch order.

    Refinement at eval time always uses the full candidate set (anchors are a
    training-cost device and would otherwise have to live in checkpoints).
    """
    cfg = state.config
    u, v, r = state.bundle.indexed(which)
    if r.size == 0:
        raise ValueError(f"cannot evaluate empty split {which!r}")
    counter = OpCounter()
    preds = np.empty_like(r)
    t0 = time.perf_counter()
    for idx in _batches(r.size, cfg.batch):
        out = forward_batch(
            state.params,
            state.graph,
            u[idx],
            v[idx],
            cfg.layers,
            cfg.lambda_w,
            cfg.trunc,
            mode="eval",
            rating_range=(state.bundle.scale.min, state.bundle.scale.max),
            gl_enabled=cfg.gl_mode == "on",
            counter=counter,
        )
        preds[idx] = out.predictions
    rmse, mae = compute_metrics(preds, r)
    return MetricsReport(
        rmse=rmse,
        mae=mae,
        n_evaluated=int(r.size),
        n_cold=int(state.bundle.cold_mask(which).sum()),
        seconds=time.perf_counter() - t0,
        sim_ops=counter.pairs,
    )


def predict_pair(state: TrainedState, raw_user: str, raw_item: str) -> float:
    """Clamped rating prediction for one raw user/item id pair."""
    ui = state.bundle.user_index.get(raw_user)
    vi = state.bundle.item_index.get(raw_item)
    if ui is None:
        raise KeyError(f"unknown user id {raw_user!r}")
    if vi is None:
        raise KeyError(f"unknown item id {raw_item!r}")
    cfg = state.config
    out = forward_batch(
        state.params,
        state.graph,
        np.array([ui]),
        np.array([vi]),
        cfg.layers,
        cfg.lambda_w,
        cfg.trunc,
        mode="eval",
        rating_range=(state.bundle.scale.min, state.bundle.scale.max),
        gl_enabled=cfg.gl_mode == "on",
    )
    return float(out.predictions[0])


def train(config: TrainConfig, ratings_path: str, links_path: str, out_dir: str) -> TrainResult:
    """Full training run; writes config echo, metrics lines, and the best checkpoint."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(dataclasses.asdict(config), fh, indent=2, sort_keys=True)
        fh.write("\n")

    state = prepare_state(config, ratings_path, links_path)
    bundle, graph, params = state.bundle, state.graph, state.params
    named = params.named()
    adam = AdamState()
    dropout_rng = np.random.default_rng(np.random.SeedSequence((config.seed, 3)))
    weights = config.loss_weights()
    gl_on = config.gl_mode == "on"

    u_tr, v_tr, r_tr = bundle.indexed("train")
    if r_tr.size == 0:
        raise ValueError("empty training split")

    metrics_path = os.path.join(out_dir, "metrics.jsonl")
    checkpoint_path = os.path.join(out_dir, "checkpoint.bin")
    records: list[EpochRecord] = []
    best_rmse = np.inf
    best_epoch = -1
    best_params: list[np.ndarray] | None = None
    stall = 0

    with open(metrics_path, "w", encoding="utf-8") as metrics_fh:
        for epoch in range(config.epochs):
            t0 = time.perf_counter()
            counter = OpCounter()
            anchors_u = anchors_v = None
            if gl_on and config.anchor_rate > 0.0:
                anchors_u = sample_anchors(NodeKind.USER, config.anchor_rate, bundle.n_users, epoch, config.seed)
                anchors_v = sample_anchors(NodeKind.ITEM, config.anchor_rate, bundle.n_items, epoch, config.seed)
            order = np.random.default_rng(np.random.SeedSequence((config.seed, 2, epoch))).permutation(r_tr.size)
            loss_sum = 0.0
            n_batches = 0
            for b_id, idx in enumerate(_batches(r_tr.size, config.batch)):
                take = order[idx]
                bu, bv, br = u_tr[take], v_tr[take], r_tr[take]
                params.zero_grads()
                with Tape() as tape:
                    out = forward_batch(
                        params, graph, bu, bv, config.layers, config.lambda_w, config.trunc,
                        mode="train", dropout_p=config.dropout, rng=dropout_rng,
                        gl_enabled=gl_on, anchors_u=anchors_u, anchors_v=anchors_v, counter=counter,
                    )
                    l_r = rating_loss(out.predictions, br)
                    l_gu = l_gv = None
                    if gl_on:
                        feats_u = eg.gather_rows(params.user_embed, out.target_users)
                        feats_v = eg.gather_rows(params.item_embed, out.target_items)
                        l_gu = graph_learner_loss(out.refined_u.fused, feats_u, weights)
                        l_gv = graph_learner_loss(out.refined_v.fused, feats_v, weights)
                    loss = hybrid_loss(l_r, l_gu, l_gv, l2_penalty(named), weights)
                    if np.isnan(loss.data):
                        raise FloatingPointError(
                            f"NaN loss at epoch {epoch} batch {b_id} "
                            f"(users {bu[:8].tolist()}..., items {bv[:8].tolist()}...)"
                        )
                    backward(tape, loss)
                adam_step(named, adam, config.lr)
                loss_sum += float(loss.data)
                n_batches += 1

            train_seconds = time.perf_counter() - t0
            valid = evaluate_state(state, "valid")
            record = EpochRecord(
                epoch=epoch,
                train_loss=loss_sum / n_batches,
                seconds=train_seconds,
                sim_ops=counter.pairs,
                valid=valid,
            )
            records.append(record)
            metrics_fh.write(json.dumps({
                "epoch": epoch, "split": "valid", "rmse": valid.rmse, "mae": valid.mae,
                "seconds": train_seconds + valid.seconds, "sim_ops": counter.pairs + valid.sim_ops,
            }) + "\n")
            metrics_fh.flush()

            if valid.rmse < best_rmse:
                best_rmse = valid.rmse
                best_epoch = epoch
                best_params = [p.data.copy() for _, p in named]
                stall = 0
            else:
                stall += 1
                if stall >= config.patience:
                    break

        # restore best parameters before the test pass
        if best_params is not None:
            for (_, p), data in zip(named, best_params):
                p.data = data.copy()
        save_checkpoint(checkpoint_path, state)
        test = evaluate_state(state, "test")
        metrics_fh.write(json.dumps({
            "epoch": best_epoch, "split": "test", "rmse": test.rmse, "mae": test.mae,
            "seconds": test.seconds, "sim_ops": test.sim_ops,
        }) + "\n")

    return TrainResult(state=state, checkpoint_path=checkpoint_path, epochs=records, best_epoch=best_epoch, test=test)


# ---------------------------------------------------------------------------
# Checkpoints: versioned binary, little-endian float64 payload


def save_checkpoint(path: str, state: TrainedState) -> None:
    named = state.params.named()
    header = {
        "config": dataclasses.asdict(state.config),
        "ratings_path": state.ratings_path,
        "links_path": state.links_path,
        "n_users": state.bundle.n_users,
        "n_items": state.bundle.n_items,
        "levels": list(state.bundle.scale.levels),
        "params": [[name, list(p.data.shape)] for name, p in named],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<I", _CKPT_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, p in named:
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_checkpoint(path: str, ratings_path: str | None = None, links_path: str | None = None) -> TrainedState:
    """Rebuild the bundle/graph from the recorded data files and restore params."""
    with open(path, "rb") as fh:
        if fh.read(4) != _CKPT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _CKPT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        config = TrainConfig(**header["config"])
        state = prepare_state(
            config,
            ratings_path or header["ratings_path"],
            links_path or header["links_path"],
        )
        if state.bundle.n_users != header["n_users"] or state.bundle.n_items != header["n_items"]:
            raise ValueError(f"{path}: data files no longer match the checkpoint's id space")
        if list(state.bundle.scale.levels) != header["levels"]:
            raise ValueError(f"{path}: rating scale changed since checkpointing")
        named = state.params.named()
        recorded = header["params"]
        if [n for n, _ in named] != [n for n, _ in recorded]:
            raise ValueError(f"{path}: parameter registry mismatch")
        for (name, p), (_, shape) in zip(named, recorded):
            if list(p.data.shape) != shape:
                raise ValueError(f"{path}: shape mismatch for {name}: {p.data.shape} vs {shape}")
            raw = fh.read(p.data.size * 8)
            p.data = np.frombuffer(raw, dtype="<f8").reshape(p.data.shape).astype(np.float64)
    return state
