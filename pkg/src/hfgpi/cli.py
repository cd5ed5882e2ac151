"""Command-line interface: synth, train, evaluate, crossval, gradcheck, inspect.

Exit codes: 0 success, 1 usage/configuration, 2 data, 3 numeric failure.
Reports go to ``--report`` (or stdout); progress goes to stderr at the level
named by ``HFGPI_LOG_LEVEL`` (default WARNING).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .config import MODALITIES, RunConfig
from .crossval import cross_validate
from .data_io import format_real, load_cohort, write_cohort
from .errors import ConfigurationError, HfgpiError, InputError, NumericError
from .gradcheck import tiny_config, tiny_model_check
from .metrics import concordance_index, kaplan_meier, log_rank, stratify_median
from .model import prepare
from .synthetic import CohortSpec, generate
from .training import load_checkpoint, predict, save_checkpoint, train

log = logging.getLogger("hfgpi")


class UsageError(ConfigurationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    d = RunConfig()
    p.add_argument("--ng", type=int, default=d.n_g, help="highly variable genes kept")
    p.add_argument("--kg", type=int, default=d.k_g, help="gene kNN neighbours")
    p.add_argument("--kp", type=int, default=d.k_p, help="protein kNN neighbours")
    p.add_argument("--topk", type=int, default=d.top_k, help="patches per hyperedge")
    p.add_argument("--lambda", dest="lam", type=float, default=d.lam, help="structure-loss weight")
    p.add_argument("--bins", type=int, default=d.bins)
    p.add_argument("--lr", type=float, default=d.lr)
    p.add_argument("--weight-decay", type=float, default=d.weight_decay)
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--accumulation", type=int, default=d.accumulation)
    p.add_argument("--folds", type=int, default=d.folds)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--modalities", default=",".join(MODALITIES),
                   help="comma-separated subset of " + ",".join(MODALITIES))


def _config_from(args) -> RunConfig:
    mods = tuple(m.strip() for m in args.modalities.split(",") if m.strip())
    return RunConfig(n_g=args.ng, k_g=args.kg, k_p=args.kp, top_k=args.topk, lam=args.lam,
                     bins=args.bins, lr=args.lr, weight_decay=args.weight_decay, epochs=args.epochs,
                     accumulation=args.accumulation, folds=args.folds, seed=args.seed,
                     modalities=mods)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hfgpi", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic cohort directory")
    p.add_argument("--out", required=True, type=Path)
    s = CohortSpec()
    p.add_argument("--patients", type=int, default=s.n_patients)
    p.add_argument("--genes", type=int, default=s.n_genes)
    p.add_argument("--proteins", type=int, default=s.n_proteins)
    p.add_argument("--mapped", type=int, default=s.n_mapped)
    p.add_argument("--beta", type=float, default=s.beta)
    p.add_argument("--censor", type=float, default=s.censor_fraction)
    p.add_argument("--bins", type=int, default=s.bins)
    p.add_argument("--seed", type=int, default=s.seed)
    p.add_argument("--overwrite", action="store_true")
    p.add_argument("--report", type=Path)

    p = sub.add_parser("train", help="train on a cohort and write a checkpoint")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path, help="checkpoint path")
    p.add_argument("--resume", type=Path, help="continue from this checkpoint (its config wins)")
    p.add_argument("--stop-after", type=int, help="stop after this many epochs in total")
    p.add_argument("--report", type=Path)
    _add_config_flags(p)

    p = sub.add_parser("evaluate", help="C-index, KM curves and log-rank of the median split")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--report", type=Path)

    p = sub.add_parser("crossval", help="k-fold cross-validation")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--report", type=Path)
    _add_config_flags(p)

    p = sub.add_parser("gradcheck", help="finite-difference check on a tiny model")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambda", dest="lam", type=float, default=0.3)
    p.add_argument("--report", type=Path)

    p = sub.add_parser("inspect", help="top-attended genes and hyperedge members for a protein")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--protein", required=True)
    p.add_argument("--top", type=int, default=20)
    p.add_argument("--report", type=Path)
    return parser


def _emit(lines: list[str], report: Path | None) -> None:
    text = "\n".join(lines) + "\n"
    if report is None:
        sys.stdout.write(text)
    else:
        report.write_text(text, encoding="utf-8")
        log.info("wrote %s", report)


def _fmt(x) -> str:
    return format_real(x) if isinstance(x, (float, np.floating)) else str(x)


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> list[str]:
    spec = CohortSpec(n_patients=args.patients, n_genes=args.genes, n_proteins=args.proteins,
                      n_mapped=args.mapped, beta=args.beta, censor_fraction=args.censor,
                      bins=args.bins, seed=args.seed)
    cohort = generate(spec)
    manifest = write_cohort(cohort.observed(), args.out, overwrite=args.overwrite)
    lines = ["# hfgpi synth"]
    lines += [f"spec.{k}={_fmt(v)}" for k, v in sorted(asdict(spec).items())]
    lines += [f"manifest={manifest}", f"patients={len(cohort)}",
              f"censored_fraction={_fmt(float(np.mean(cohort.censored)))}"]
    return lines


def cmd_train(args) -> list[str]:
    if args.resume is not None:
        state = load_checkpoint(args.resume)
        config = state.config
    else:
        state, config = None, _config_from(args)
    cohort = load_cohort(args.manifest)
    data = prepare(cohort, config)
    try:
        state = train(data, config, state=state, stop_after=args.stop_after)
    except NumericError as exc:
        if exc.last_good is not None:
            rescue = args.out.with_name(args.out.name + ".last_good")
            save_checkpoint(exc.last_good, rescue)
            log.error("saved last good state to %s", rescue)
        raise
    save_checkpoint(state, args.out)
    lines = ["# hfgpi train", *config.echo_lines(),
             f"checkpoint={args.out}", f"patients={len(data)}", f"epochs_done={state.epochs_done}",
             "epoch\tsurv_loss\tstruct_loss\ttotal_loss"]
    lines += [f"{h.epoch}\t{_fmt(h.surv_loss)}\t{_fmt(h.struct_loss)}\t{_fmt(h.total_loss)}"
              for h in state.history]
    return lines


def _km_block(title: str, times, censored) -> list[str]:
    curve = kaplan_meier(times, censored)
    lines = [f"[{title}]", "time\tsurvival\tat_risk\tevents", f"{_fmt(0.0)}\t{_fmt(1.0)}\t{len(times)}\t0"]
    lines += [f"{_fmt(t)}\t{_fmt(s)}\t{n}\t{d}"
              for t, s, n, d in zip(curve.times, curve.survival, curve.at_risk, curve.events)]
    return lines


def cmd_evaluate(args) -> list[str]:
    state = load_checkpoint(args.checkpoint)
    config = state.config
    data = prepare(load_cohort(args.manifest), config)
    pred = predict(state.params, data, config)
    cidx = concordance_index(pred.risks, data.times, data.censored)
    high, low = stratify_median(pred.risks)
    lines = ["# hfgpi evaluate", *config.echo_lines(), f"checkpoint={args.checkpoint}",
             f"patients={len(data)}", f"c_index={_fmt(cidx)}",
             f"high_risk_n={high.size}", f"low_risk_n={low.size}"]
    lines += _km_block("km high_risk", data.times[high], data.censored[high])
    lines += _km_block("km low_risk", data.times[low], data.censored[low])
    if high.size and low.size:
        lr = log_rank(data.times[high], data.censored[high], data.times[low], data.censored[low])
        lines += ["[log_rank]", f"statistic={_fmt(lr.statistic)}", f"p_value={_fmt(lr.p_value)}",
                  f"observed_high={_fmt(lr.observed[0])}", f"expected_high={_fmt(lr.expected[0])}",
                  f"observed_low={_fmt(lr.observed[1])}", f"expected_low={_fmt(lr.expected[1])}"]
    else:
        lines += ["[log_rank]", "statistic=nan", "p_value=nan"]
    return lines


def cmd_crossval(args) -> list[str]:
    config = _config_from(args)
    data = prepare(load_cohort(args.manifest), config)
    result = cross_validate(data, config)
    lines = ["# hfgpi crossval", *config.echo_lines(), "fold\tn_train\tn_test\tc_index"]
    for f in result.folds:
        c = "invalid" if f.cindex is None else _fmt(f.cindex)
        lines.append(f"{f.fold + 1}\t{f.train_indices.size}\t{f.test_indices.size}\t{c}")
    if not result.valid:
        raise NumericError("every fold lacks comparable pairs; no C-index to report")
    lines += [f"valid_folds={len(result.valid)}", f"mean_c_index={_fmt(result.mean)}",
              f"std_c_index={_fmt(result.std)}"]
    return lines


def cmd_gradcheck(args) -> list[str]:
    report = tiny_model_check(tolerance=args.tolerance, seed=args.seed, lam=args.lam)
    lines = ["# hfgpi gradcheck", *tiny_config(args.seed, args.lam).echo_lines(),
             f"tolerance={_fmt(args.tolerance)}", report.format_table(),
             f"max_relative_error={_fmt(report.max_relative_error)}",
             f"result={'PASS' if report.passed else 'FAIL'}"]
    if not report.passed:
        _emit(lines, args.report)
        raise NumericError(f"gradient check failed (max relative error {report.max_relative_error:.3e})")
    return lines


def top_genes(mean_attention_row: np.ndarray, names, n: int) -> list[tuple[str, float]]:
    """Genes sorted by descending mean attention; ties keep table order."""
    order = np.argsort(-mean_attention_row, kind="stable")[:n]
    return [(names[j], float(mean_attention_row[j])) for j in order]


def cmd_inspect(args) -> list[str]:
    state = load_checkpoint(args.checkpoint)
    config = state.config
    data = prepare(load_cohort(args.manifest), config)
    names = data.protein_identity.names
    if args.protein not in names:
        raise UsageError(f"unknown protein {args.protein!r}; available: {', '.join(names)}")
    i = names.index(args.protein)
    pred = predict(state.params, data, config, keep_details=True)
    lines = ["# hfgpi inspect", *config.echo_lines(), f"checkpoint={args.checkpoint}",
             f"protein={args.protein}"]
    if "genomic" in config.modalities:
        mean_t = np.mean(np.stack(pred.attention), axis=0)
        lines += ["[top_genes]", "rank\tgene\tmean_attention"]
        lines += [f"{r}\t{g}\t{_fmt(w)}"
                  for r, (g, w) in enumerate(top_genes(mean_t[i], data.gene_identity.names, args.top), 1)]
    else:
        lines += ["[top_genes]", "unavailable: genomic modality disabled"]
    lines += ["[hyperedge_members]", "sample_id\tpatch_ids"]
    for sid, inc in zip(data.sample_ids, pred.incidences):
        members = "" if inc is None else ",".join(str(int(m)) for m in inc.members(i))
        lines.append(f"{sid}\t{members}")
    return lines


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "evaluate": cmd_evaluate,
            "crossval": cmd_crossval, "gradcheck": cmd_gradcheck, "inspect": cmd_inspect}


def main(argv=None) -> int:
    level = os.environ.get("HFGPI_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        lines = COMMANDS[args.command](args)
        _emit(lines, args.report)
    except HfgpiError as exc:
        print(f"hfgpi: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        # stray I/O or numeric-parse failures are data errors
        print(f"hfgpi: error: {exc}", file=sys.stderr)
        return InputError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
