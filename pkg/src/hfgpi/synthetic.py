"""Synthetic multimodal cohorts with a planted, recoverable risk signal.

Generative story per patient:

* latent risk ``r ~ N(0, 1)`` and a risk-free factor ``f_i`` per mapped protein;
* driver genes of protein ``i`` express ``base + beta * r * loading + a * f_i + noise``
  in log2 space (raw counts are ``2**x - 1``);
* protein ``i`` expresses the mean of its drivers' centred log-expression plus noise;
* a few patches per mapped protein carry ``softplus(q_i) * p_i`` on top of background;
* event times are exponential with log-rate ``hazard_scale * beta * r``; an
  independent uniform censoring horizon is tuned to the target censored fraction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import rng_stream
from .data_io import Cohort
from .errors import ConfigurationError, InputError
from .metrics import concordance_index
from .tokenizer import IdentityTable


@dataclass(frozen=True)
class CohortSpec:
    n_patients: int = 200
    n_genes: int = 48
    n_proteins: int = 8
    n_mapped: int = 6
    drivers_per_protein: int = 4
    patches_min: int = 16
    patches_max: int = 32
    d_g: int = 16
    d: int = 16
    bins: int = 4
    beta: float = 2.0
    censor_fraction: float = 0.3
    seed: int = 0
    hazard_scale: float = 2.0
    protein_factor: float = 1.0
    gene_noise: float = 0.5
    protein_noise: float = 3.0
    signature_patches: int = 2
    signature_scale: float = 1.5
    baseline_median_months: float = 24.0
    regulatory_map: dict[int, tuple[int, ...]] | None = None

    def drivers(self) -> dict[int, tuple[int, ...]]:
        if self.regulatory_map is not None:
            return {int(k): tuple(int(g) for g in v) for k, v in self.regulatory_map.items()}
        k = self.drivers_per_protein
        return {i: tuple(range(i * k, (i + 1) * k)) for i in range(self.n_mapped)}

    def validate(self) -> None:
        for name in ("n_patients", "n_genes", "n_proteins", "patches_min", "d_g", "d",
                     "drivers_per_protein"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")
        if self.patches_max < self.patches_min:
            raise ConfigurationError("patches_max must be >= patches_min")
        if not 0.0 <= self.censor_fraction < 1.0:
            raise ConfigurationError(f"censor fraction must lie in [0, 1), got {self.censor_fraction}")
        if self.beta < 0:
            raise ConfigurationError("signal strength beta must be >= 0")
        if self.bins < 2:
            raise ConfigurationError("bins must be >= 2")
        drivers = self.drivers()
        for protein, genes in drivers.items():
            if not 0 <= protein < self.n_proteins:
                raise ConfigurationError(f"regulatory map names protein {protein} out of range")
            if any(not 0 <= g < self.n_genes for g in genes) or not genes:
                raise ConfigurationError(f"regulatory map for protein {protein} names invalid genes")
        if len(drivers) * self.signature_patches > self.patches_min:
            raise ConfigurationError("patches_min too small to host every protein signature")


@dataclass
class SyntheticCohort(Cohort):
    hidden_risk: np.ndarray = field(default_factory=lambda: np.zeros(0))
    drivers: dict[int, tuple[int, ...]] = field(default_factory=dict)
    signature_rows: list[dict[int, np.ndarray]] = field(default_factory=list)

    def observed(self) -> Cohort:
        """The exportable part: identical to what a loader would return."""
        return Cohort(self.gene_identity, self.protein_identity, self.sample_ids,
                      self.gene_expression, self.protein_expression, self.patches,
                      self.times, self.censored)


def _block_embeddings(rng: np.random.Generator, groups: list[list[int]], n: int, width: int,
                      spread: float) -> np.ndarray:
    emb = np.zeros((n, width))
    for members in groups:
        center = rng.normal(size=width)
        for idx in members:
            emb[idx] += center + spread * rng.normal(size=width)
    return emb


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _censoring(rng: np.random.Generator, event_times: np.ndarray, target: float
               ) -> tuple[np.ndarray, np.ndarray]:
    n = event_times.size
    for _ in range(10):
        u = rng.uniform(1e-3, 1.0, size=n)
        ratio = event_times / u  # censored iff horizon u*tau < event time, i.e. tau < ratio
        n_censor = int(round(target * n))
        srt = np.sort(ratio)
        if n_censor == 0:
            tau = srt[-1] * 2.0
        else:
            tau = 0.5 * (srt[n - n_censor - 1] + srt[n - n_censor]) if n_censor < n else srt[0] * 0.5
        horizon = u * tau
        censored = horizon < event_times
        if abs(censored.mean() - target) <= 0.05:
            return np.minimum(event_times, horizon), censored
    raise InputError(f"could not reach censored fraction {target} within 10 attempts")


def generate(spec: CohortSpec) -> SyntheticCohort:
    spec.validate()
    rng = rng_stream(spec.seed, "synthetic")
    n, ng, npr = spec.n_patients, spec.n_genes, spec.n_proteins
    drivers = spec.drivers()

    # identity embeddings with known communities
    driver_genes = {g for genes in drivers.values() for g in genes}
    gene_groups = [list(genes) for genes in drivers.values()]
    rest = [g for g in range(ng) if g not in driver_genes]
    step = spec.drivers_per_protein
    gene_groups += [rest[i:i + step] for i in range(0, len(rest), step)]
    g_emb = _block_embeddings(rng, gene_groups, ng, spec.d_g, 0.3)
    protein_groups = [list(range(i, min(i + 2, npr))) for i in range(0, npr, 2)]
    p_emb = _block_embeddings(rng, protein_groups, npr, spec.d, 0.5)

    # latent risk, per-protein factors and expression in log2 space
    risk = rng.normal(size=n)
    factors = rng.normal(size=(n, npr))
    base = rng.uniform(5.0, 8.0, size=ng)
    log_expr = base + rng.normal(size=(n, ng)) * 0.8
    for protein, genes in sorted(drivers.items()):
        loading = rng.uniform(0.5, 1.0, size=len(genes))
        for g, load in zip(genes, loading):
            log_expr[:, g] = (base[g] + spec.beta * risk * load
                              + spec.protein_factor * factors[:, protein]
                              + spec.gene_noise * rng.normal(size=n))
    log_expr = np.maximum(log_expr, 0.0)
    gene_raw = np.exp2(log_expr) - 1.0

    protein_expr = rng.normal(size=(n, npr))
    for protein, genes in drivers.items():
        centred = log_expr[:, list(genes)] - base[list(genes)]
        protein_expr[:, protein] = centred.mean(axis=1) + spec.protein_noise * rng.normal(size=n)

    # patches: background plus protein signatures scaled by expression
    unit_p = p_emb / np.linalg.norm(p_emb, axis=1, keepdims=True)
    patches, signature_rows = [], []
    for k in range(n):
        m = int(rng.integers(spec.patches_min, spec.patches_max + 1))
        y = rng.normal(size=(m, spec.d))
        rows = rng.permutation(m)
        marks = {}
        for slot, protein in enumerate(sorted(drivers)):
            sel = np.sort(rows[slot * spec.signature_patches:(slot + 1) * spec.signature_patches])
            amp = spec.signature_scale * _softplus(protein_expr[k, protein]) * np.sqrt(spec.d)
            y[sel] += amp * unit_p[protein]
            marks[protein] = sel
        patches.append(y)
        signature_rows.append(marks)

    # survival
    rate = np.log(2.0) / spec.baseline_median_months * np.exp(spec.hazard_scale * spec.beta * risk)
    event_times = np.maximum(rng.exponential(1.0 / rate), 1e-9)
    times, censored = _censoring(rng, event_times, spec.censor_fraction)

    width = len(str(n - 1))
    return SyntheticCohort(
        gene_identity=IdentityTable(tuple(f"G{j:03d}" for j in range(ng)), g_emb),
        protein_identity=IdentityTable(tuple(f"P{i:02d}" for i in range(npr)), p_emb),
        sample_ids=tuple(f"S{k:0{width}d}" for k in range(n)),
        gene_expression=gene_raw,
        protein_expression=protein_expr,
        patches=patches,
        times=times,
        censored=censored,
        hidden_risk=risk,
        drivers=drivers,
        signature_rows=signature_rows,
    )


def oracle_cindex(cohort: SyntheticCohort) -> float:
    """Concordance of the hidden risk with the observed outcomes."""
    if cohort.hidden_risk.size != len(cohort):
        raise InputError("cohort carries no hidden risk")
    return concordance_index(cohort.hidden_risk, cohort.times, cohort.censored)
