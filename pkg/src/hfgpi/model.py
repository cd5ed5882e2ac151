"""The full gene -> protein -> patch -> hazard pipeline for one patient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .config import RunConfig, rng_stream
from .data_io import Cohort
from .graphs import SparseAdjacency, cost_matrix, gcn_forward, knn_graph, normalized_propagation
from .grpf import cross_attention, regulate, structure_loss
from .pghl import Incidence, aggregate_hyperedges, build_incidence, fuse, hypergraph_conv
from .survival import (EncoderLayer, gated_attention_pool, nll_loss, predict_hazards,
                       total_loss, transformer_encode)
from .tokenizer import IdentityTable, normalize_expression, select_hvg

Params = dict[str, np.ndarray]


@dataclass
class PreparedCohort:
    """Tokens and graphs ready for the model; graphs are shared by all patients."""

    sample_ids: tuple[str, ...]
    gene_identity: IdentityTable
    protein_identity: IdentityTable
    gene_values: np.ndarray       # patients x selected genes, normalised
    protein_values: np.ndarray    # patients x proteins
    patches: list[np.ndarray]
    times: np.ndarray
    censored: np.ndarray
    gene_graph: SparseAdjacency
    protein_graph: SparseAdjacency
    gene_propagation: np.ndarray
    protein_propagation: np.ndarray
    gene_cost: np.ndarray
    protein_cost: np.ndarray
    gene_indices: np.ndarray      # selected columns of the original gene table

    def __len__(self) -> int:
        return len(self.sample_ids)

    def gene_tokens(self, k: int) -> np.ndarray:
        return self.gene_values[k][:, None] * self.gene_identity.embeddings

    def protein_tokens(self, k: int, use_expression: bool = True) -> np.ndarray:
        if not use_expression:
            return self.protein_identity.embeddings
        return self.protein_values[k][:, None] * self.protein_identity.embeddings


def prepare(cohort: Cohort, config: RunConfig) -> PreparedCohort:
    """Select variable genes, normalise expression and build both kNN graphs."""
    genes = np.sort(select_hvg(cohort.gene_expression, config.n_g))  # keep file order
    gene_identity = cohort.gene_identity.subset(genes)
    gene_values = normalize_expression(cohort.gene_expression[:, genes], log_transform=True)
    if config.zscore_proteins:
        protein_values = normalize_expression(cohort.protein_expression, log_transform=False)
    else:
        protein_values = np.asarray(cohort.protein_expression, dtype=np.float64)
    k_g = min(config.k_g, len(gene_identity) - 1)
    k_p = min(config.k_p, len(cohort.protein_identity) - 1)
    gene_graph = knn_graph(gene_identity.embeddings, k_g)
    protein_graph = knn_graph(cohort.protein_identity.embeddings, k_p)
    return PreparedCohort(
        sample_ids=cohort.sample_ids,
        gene_identity=gene_identity,
        protein_identity=cohort.protein_identity,
        gene_values=gene_values,
        protein_values=protein_values,
        patches=cohort.patches,
        times=np.asarray(cohort.times, dtype=np.float64),
        censored=np.asarray(cohort.censored, dtype=bool),
        gene_graph=gene_graph,
        protein_graph=protein_graph,
        gene_propagation=normalized_propagation(gene_graph),
        protein_propagation=normalized_propagation(protein_graph),
        gene_cost=cost_matrix(gene_graph),
        protein_cost=cost_matrix(protein_graph),
        gene_indices=np.asarray(genes),
    )


def init_params(config: RunConfig, d_g: int, d: int, n_proteins: int,
                stream: tuple[int, ...] = ()) -> Params:
    """Uniform(+-1/sqrt(fan_in)) weights, unit layer-norm scales, zero biases."""
    rng = rng_stream(config.seed, "init", *stream)

    def uniform(fan_in, fan_out):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=(fan_in, fan_out))

    p: Params = {}
    for layer in range(config.gcn_layers):
        p[f"gene_gcn.{layer}.weight"] = uniform(d_g, d_g)
        p[f"protein_gcn.{layer}.weight"] = uniform(d, d)
    p["grpf.w_q"] = uniform(d, d)
    p["grpf.w_k"] = uniform(d_g, d)
    p["grpf.w_v"] = uniform(d_g, d)
    p["pghl.edge_log_weight"] = np.zeros((1, n_proteins))
    p["pghl.w_p"] = uniform(d, d)
    d_ff = config.ff_mult * d
    for layer in range(config.layers):
        pre = f"encoder.{layer}."
        p[pre + "ln1_gamma"] = np.ones((1, d))
        p[pre + "ln1_beta"] = np.zeros((1, d))
        for name in ("w_q", "w_k", "w_v", "w_o"):
            p[pre + name] = uniform(d, d)
        p[pre + "ln2_gamma"] = np.ones((1, d))
        p[pre + "ln2_beta"] = np.zeros((1, d))
        p[pre + "w_1"] = uniform(d, d_ff)
        p[pre + "b_1"] = np.zeros((1, d_ff))
        p[pre + "w_2"] = uniform(d_ff, d)
        p[pre + "b_2"] = np.zeros((1, d))
    d_attn = config.pool_dim or d
    p["pool.v"] = uniform(d, d_attn)
    p["pool.u"] = uniform(d, d_attn)
    p["pool.w"] = uniform(d_attn, 1)
    p["head.weight"] = uniform(d, config.bins)
    p["head.bias"] = np.zeros((1, config.bins))
    return p


def parameter_groups(params: Params) -> list[str]:
    return list(params)


@dataclass
class ForwardResult:
    loss: ad.Tensor
    surv_loss: float
    struct_loss: float
    hazards: np.ndarray
    attention: np.ndarray | None      # T, proteins x genes
    incidence: Incidence | None
    pool_weights: np.ndarray
    struct_tensor: ad.Tensor | None
    tensors: dict[str, ad.Tensor]


def _similarity_for_topk(y: np.ndarray, xp: np.ndarray) -> np.ndarray:
    # zero-norm protein rows (possible after ReLU) score 0 against every patch
    ny = np.linalg.norm(y, axis=1, keepdims=True)
    nx = np.linalg.norm(xp, axis=1, keepdims=True)
    nx = np.where(nx == 0, 1.0, nx)
    return (y / ny) @ (xp / nx).T


def forward(params: Params | dict[str, ad.Tensor], data: PreparedCohort, k: int, config: RunConfig, *,
            time_bin: int | None = None, incidence: Incidence | None = None,
            with_struct: bool | None = None) -> ForwardResult:
    """Run the pipeline for patient ``k`` and build the training loss.

    ``time_bin`` is required for a loss; without it ``loss`` is a zero
    placeholder. ``incidence`` freezes the hypergraph instead of rebuilding
    it from current similarities (used by gradient checks). Entries of
    ``params`` that are already tensors are used as-is.
    """
    t = {name: value if isinstance(value, ad.Tensor) else ad.parameter(value, name)
         for name, value in params.items()}
    mods = set(config.modalities)
    if with_struct is None:
        with_struct = config.lam > 0

    x_g = ad.constant(data.gene_tokens(k))
    x_p = ad.constant(data.protein_tokens(k, use_expression="proteomic" in mods))
    for layer in range(config.gcn_layers):
        x_g = gcn_forward(x_g, data.gene_propagation, t[f"gene_gcn.{layer}.weight"])
        x_p = gcn_forward(x_p, data.protein_propagation, t[f"protein_gcn.{layer}.weight"])

    attention = None
    struct = None
    if "genomic" in mods:
        tt, context = cross_attention(x_p, x_g, t["grpf.w_q"], t["grpf.w_k"], t["grpf.w_v"])
        xp_reg = regulate(x_p, context)
        attention = tt.value
        if with_struct:
            struct = structure_loss(tt, data.gene_cost, data.protein_cost)
    else:
        xp_reg = x_p

    fused = xp_reg
    if "pathology" in mods:
        y = data.patches[k]
        if incidence is None:
            incidence = build_incidence(_similarity_for_topk(y, xp_reg.value), config.top_k)
        act = ad.relu if config.hypergraph_activation == "relu" else (lambda v: v)
        z = hypergraph_conv(y, incidence, ad.exp(t["pghl.edge_log_weight"]), t["pghl.w_p"], act)
        fused = fuse(aggregate_hyperedges(incidence, z), xp_reg)
    else:
        incidence = None

    layers = [EncoderLayer(*(t[f"encoder.{i}.{n}"] for n in (
        "ln1_gamma", "ln1_beta", "w_q", "w_k", "w_v", "w_o",
        "ln2_gamma", "ln2_beta", "w_1", "b_1", "w_2", "b_2")), heads=config.heads)
        for i in range(config.layers)]
    encoded = transformer_encode(fused, layers)
    pooled, weights = gated_attention_pool(encoded, t["pool.v"], t["pool.u"], t["pool.w"])
    hazards = predict_hazards(pooled, t["head.weight"], t["head.bias"])

    if time_bin is None:
        loss = ad.constant(0.0)
        surv_value = float("nan")
    else:
        surv = nll_loss(hazards, int(time_bin), bool(data.censored[k]))
        surv_value = surv.item()
        loss = total_loss(surv, struct, config.lam) if struct is not None else surv
    return ForwardResult(
        loss=loss,
        surv_loss=surv_value,
        struct_loss=struct.item() if struct is not None else 0.0,
        hazards=hazards.value.reshape(-1).copy(),
        attention=attention,
        incidence=incidence,
        pool_weights=weights.value.reshape(-1).copy(),
        struct_tensor=struct,
        tensors=t,
    )


def loss_and_grads(params: Params, data: PreparedCohort, k: int, config: RunConfig,
                   time_bin: int) -> tuple[ForwardResult, dict[str, np.ndarray]]:
    result = forward(params, data, k, config, time_bin=time_bin)
    names = list(result.tensors)
    grads = ad.grad(result.loss, [result.tensors[n] for n in names])
    return result, dict(zip(names, grads))
