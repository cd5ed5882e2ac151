"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .autodiff import Tensor, grad


@dataclass(frozen=True)
class GroupCheck:
    name: str
    max_abs_error: float
    relative_error: float
    passed: bool


@dataclass(frozen=True)
class GradcheckReport:
    groups: tuple[GroupCheck, ...]
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(g.passed for g in self.groups)

    @property
    def max_relative_error(self) -> float:
        return max((g.relative_error for g in self.groups), default=0.0)

    def format_table(self) -> str:
        lines = ["group\tmax_abs_error\trelative_error\tstatus"]
        for g in self.groups:
            status = "PASS" if g.passed else "FAIL"
            lines.append(f"{g.name}\t{g.max_abs_error:.3e}\t{g.relative_error:.3e}\t{status}")
        return "\n".join(lines)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """Max absolute discrepancy scaled by the group's largest gradient entry."""
    scale = max(np.max(np.abs(analytic), initial=0.0), np.max(np.abs(numeric), initial=0.0), floor)
    return float(np.max(np.abs(analytic - numeric), initial=0.0) / scale)


def numeric_gradient(f: Callable[[], Tensor], param: Tensor, h: float = 1e-5) -> np.ndarray:
    out = np.zeros(param.shape)
    flat = param.value.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f().item()
        flat[i] = orig - h
        fm = f().item()
        flat[i] = orig
        out.reshape(-1)[i] = (fp - fm) / (2.0 * h)
    return out


def finite_difference_check(f: Callable[[], Tensor], params: Sequence[Tensor],
                            tolerance: float = 1e-6, names: Sequence[str] | None = None,
                            h: float = 1e-5) -> GradcheckReport:
    """Compare reverse-mode gradients of ``f`` against central differences.

    ``f`` is re-evaluated from scratch for every perturbation, so it must
    read the parameter tensors' current values and be deterministic.
    """
    params = list(params)
    names = list(names) if names is not None else [p.name or f"param{i}" for i, p in enumerate(params)]
    analytic = grad(f(), params)
    groups = []
    for name, p, a in zip(names, params, analytic):
        n = numeric_gradient(f, p, h)
        err = relative_error(a, n)
        groups.append(GroupCheck(name, float(np.max(np.abs(a - n), initial=0.0)), err, err < tolerance))
    return GradcheckReport(tuple(groups), tolerance)


def tiny_config(seed: int = 0, lam: float = 0.3):
    from .config import RunConfig
    return RunConfig(n_g=6, k_g=2, k_p=1, top_k=2, bins=2, lam=lam, seed=seed)


def tiny_model_check(tolerance: float = 1e-4, seed: int = 0, lam: float = 0.3,
                     h: float = 1e-5) -> GradcheckReport:
    """Check the full composite loss on a tiny cohort (6 genes, 3 proteins, 5 patches, width 4, 2 bins).

    The loss sums one censored and one uncensored patient. Each patient's
    hypergraph incidence is frozen at the initial parameters, since top-k
    selection is piecewise constant.
    """
    # local imports: the model stack depends on this module's siblings, not on it
    from .autodiff import add, parameter
    from .model import forward, init_params, prepare
    from .survival import assign_bins
    from .synthetic import CohortSpec, generate

    spec = CohortSpec(n_patients=12, n_genes=6, n_proteins=3, n_mapped=2, drivers_per_protein=2,
                      patches_min=5, patches_max=5, d_g=4, d=4, bins=2, seed=seed,
                      censor_fraction=0.3)
    cohort = generate(spec)
    config = tiny_config(seed, lam)
    data = prepare(cohort, config)
    edges = np.array([float(np.median(data.times[~data.censored]))])
    bins = assign_bins(data.times, edges)
    picks = [int(np.flatnonzero(data.censored)[0]), int(np.flatnonzero(~data.censored)[0])]

    tensors = {n: parameter(v, n) for n, v in init_params(config, 4, 4, 3).items()}
    frozen = {k: forward(tensors, data, k, config).incidence for k in picks}

    def loss():
        out = [forward(tensors, data, k, config, time_bin=int(bins[k]), incidence=frozen[k]).loss
               for k in picks]
        return add(out[0], out[1])

    names = list(tensors)
    return finite_difference_check(loss, [tensors[n] for n in names], tolerance, names, h)
