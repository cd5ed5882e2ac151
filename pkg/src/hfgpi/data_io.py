"""Cohort files: tab-delimited tables, binary patch matrices, key=value manifest."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AlignmentError, InputError, ParseError, ReconciliationError
from .tokenizer import IdentityTable

PATCH_MAGIC = b"HFGP"
PATCH_VERSION = 1
PATCH_HEADER = struct.Struct("<4sIQQ")
MANIFEST_NAME = "manifest.txt"
MANIFEST_KEYS = ("gene_identity", "protein_identity", "gene_expression",
                 "protein_expression", "patch_dir", "survival")


@dataclass
class Cohort:
    gene_identity: IdentityTable
    protein_identity: IdentityTable
    sample_ids: tuple[str, ...]
    gene_expression: np.ndarray      # patients x genes, raw (non-negative) values
    protein_expression: np.ndarray   # patients x proteins, unit-normalised values
    patches: list[np.ndarray]        # one M_k x d matrix per patient
    times: np.ndarray                # months, > 0
    censored: np.ndarray             # bool, True = censored
    rejected: dict[str, list[str]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.sample_ids)

    def subset(self, indices) -> "Cohort":
        idx = [int(i) for i in indices]
        return Cohort(self.gene_identity, self.protein_identity,
                      tuple(self.sample_ids[i] for i in idx),
                      self.gene_expression[idx], self.protein_expression[idx],
                      [self.patches[i] for i in idx], self.times[idx], self.censored[idx])


def format_real(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# delimited tables


def _write_table(path: Path, header: list[str], rows: list[list[str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(row) + "\n")


def _read_table(path: Path) -> tuple[list[str], list[list[str]], list[int]]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ParseError(f"{path}: file not found") from exc
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError(f"{path}: empty file")
    header = lines[0].split("\t")
    rows, line_numbers = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        cells = line.split("\t")
        if len(cells) != len(header):
            raise ParseError(f"{path}:{lineno}: expected {len(header)} fields, found {len(cells)}")
        rows.append(cells)
        line_numbers.append(lineno)
    return header, rows, line_numbers


def _parse_float(cell: str, path: Path, lineno: int, column: str) -> float:
    try:
        value = float(cell)
    except ValueError as exc:
        raise ParseError(f"{path}:{lineno}: column {column!r}: not a number: {cell!r}") from exc
    if not np.isfinite(value):
        raise ParseError(f"{path}:{lineno}: column {column!r}: non-finite value {cell!r}")
    return value


def write_identity(path: Path, table: IdentityTable) -> None:
    header = ["name"] + [f"e{j}" for j in range(table.width)]
    rows = [[name] + [format_real(v) for v in row] for name, row in zip(table.names, table.embeddings)]
    _write_table(path, header, rows)


def read_identity(path: Path) -> IdentityTable:
    header, rows, linenos = _read_table(path)
    if header[0] != "name":
        raise ParseError(f"{path}:1: first column must be 'name', found {header[0]!r}")
    names = [r[0] for r in rows]
    values = np.array([[_parse_float(c, path, ln, header[j + 1]) for j, c in enumerate(r[1:])]
                       for r, ln in zip(rows, linenos)], dtype=np.float64).reshape(len(rows), len(header) - 1)
    try:
        return IdentityTable(tuple(names), values)
    except InputError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def write_expression(path: Path, sample_ids, features, values: np.ndarray) -> None:
    rows = [[sid] + [format_real(v) for v in row] for sid, row in zip(sample_ids, values)]
    _write_table(path, ["sample_id", *features], rows)


def read_expression(path: Path) -> tuple[list[str], list[str], np.ndarray]:
    header, rows, linenos = _read_table(path)
    if header[0] != "sample_id":
        raise ParseError(f"{path}:1: first column must be 'sample_id', found {header[0]!r}")
    features = header[1:]
    if len(set(features)) != len(features):
        raise ParseError(f"{path}:1: duplicate feature names")
    ids = [r[0] for r in rows]
    if len(set(ids)) != len(ids):
        raise ParseError(f"{path}: duplicate sample ids")
    values = np.array([[_parse_float(c, path, ln, features[j]) for j, c in enumerate(r[1:])]
                       for r, ln in zip(rows, linenos)], dtype=np.float64).reshape(len(rows), len(features))
    return ids, features, values


def write_survival(path: Path, sample_ids, times, censored) -> None:
    rows = [[sid, format_real(t), "1" if c else "0"] for sid, t, c in zip(sample_ids, times, censored)]
    _write_table(path, ["sample_id", "time_months", "censored"], rows)


def read_survival(path: Path) -> tuple[list[str], np.ndarray, np.ndarray]:
    header, rows, linenos = _read_table(path)
    if header != ["sample_id", "time_months", "censored"]:
        raise ParseError(f"{path}:1: expected header sample_id, time_months, censored")
    ids, times, flags = [], [], []
    for r, ln in zip(rows, linenos):
        t = _parse_float(r[1], path, ln, "time_months")
        if t <= 0:
            raise ParseError(f"{path}:{ln}: survival time must be positive, got {r[1]}")
        if r[2] not in ("0", "1"):
            raise ParseError(f"{path}:{ln}: censored flag must be 0 or 1, got {r[2]!r}")
        ids.append(r[0])
        times.append(t)
        flags.append(r[2] == "1")
    if len(set(ids)) != len(ids):
        raise ParseError(f"{path}: duplicate sample ids")
    return ids, np.array(times), np.array(flags, dtype=bool)


# ---------------------------------------------------------------------------
# binary patch matrices


def write_patches(path: Path, y: np.ndarray) -> None:
    y = np.ascontiguousarray(y, dtype="<f8")
    if y.ndim != 2 or y.shape[0] < 1:
        raise InputError(f"patch matrix must be 2-D with at least one row, got {y.shape}")
    with open(path, "wb") as fh:
        fh.write(PATCH_HEADER.pack(PATCH_MAGIC, PATCH_VERSION, y.shape[0], y.shape[1]))
        fh.write(y.tobytes(order="C"))


def read_patches(path: Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < PATCH_HEADER.size:
        raise ParseError(f"{path}: header needs {PATCH_HEADER.size} bytes, file has {len(data)}")
    magic, version, m, d = PATCH_HEADER.unpack_from(data)
    if magic != PATCH_MAGIC:
        raise ParseError(f"{path}: byte 0: bad magic {magic!r}")
    if version != PATCH_VERSION:
        raise ParseError(f"{path}: byte 4: unsupported format version {version}")
    if m < 1:
        raise ParseError(f"{path}: byte 8: patch count must be >= 1")
    expected = 8 * m * d
    actual = len(data) - PATCH_HEADER.size
    if actual != expected:
        raise ParseError(f"{path}: payload at byte {PATCH_HEADER.size}: expected {expected} bytes, found {actual}")
    y = np.frombuffer(data, dtype="<f8", offset=PATCH_HEADER.size).reshape(m, d).astype(np.float64)
    if not np.all(np.isfinite(y)):
        raise ParseError(f"{path}: non-finite patch feature")
    return y


# ---------------------------------------------------------------------------
# manifest


def read_manifest(path: Path) -> dict[str, str]:
    entries = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"{path}:{lineno}: expected key=value, found {line!r}")
        key, value = line.split("=", 1)
        entries[key.strip()] = value.strip()
    missing = [k for k in MANIFEST_KEYS if k not in entries]
    if missing:
        raise ParseError(f"{path}: manifest lacks {', '.join(missing)}")
    return entries


def write_cohort(cohort: Cohort, directory, overwrite: bool = False) -> Path:
    out = Path(directory)
    manifest = out / MANIFEST_NAME
    if manifest.exists() and not overwrite:
        raise InputError(f"{manifest} already exists; pass overwrite=True to replace it")
    patch_dir = out / "patches"
    patch_dir.mkdir(parents=True, exist_ok=True)
    if overwrite:
        for stale in patch_dir.glob("*.hfgp"):
            stale.unlink()
    write_identity(out / "gene_identity.tsv", cohort.gene_identity)
    write_identity(out / "protein_identity.tsv", cohort.protein_identity)
    write_expression(out / "gene_expression.tsv", cohort.sample_ids, cohort.gene_identity.names,
                     cohort.gene_expression)
    write_expression(out / "protein_expression.tsv", cohort.sample_ids, cohort.protein_identity.names,
                     cohort.protein_expression)
    write_survival(out / "survival.tsv", cohort.sample_ids, cohort.times, cohort.censored)
    for sid, y in zip(cohort.sample_ids, cohort.patches):
        write_patches(patch_dir / f"{sid}.hfgp", y)
    entries = {
        "format": "hfgpi-cohort",
        "version": "1",
        "gene_identity": "gene_identity.tsv",
        "protein_identity": "protein_identity.tsv",
        "gene_expression": "gene_expression.tsv",
        "protein_expression": "protein_expression.tsv",
        "patch_dir": "patches",
        "survival": "survival.tsv",
    }
    manifest.write_text("".join(f"{k}={v}\n" for k, v in entries.items()), encoding="utf-8")
    return manifest


def _check_features(path: str, features: list[str], table: IdentityTable) -> None:
    if tuple(features) == table.names:
        return
    for i, (a, b) in enumerate(zip(features, table.names)):
        if a != b:
            raise AlignmentError(f"{path}: feature {i} is {a!r} but identity table lists {b!r}")
    raise AlignmentError(f"{path}: {len(features)} features but identity table has {len(table.names)}")


def load_cohort(manifest_path) -> Cohort:
    """Load every modality and keep only patients present in all of them.

    Patients missing from any modality are dropped and listed in
    ``Cohort.rejected`` (sample id -> missing modalities).
    """
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / MANIFEST_NAME
    if not manifest_path.exists():
        raise ParseError(f"{manifest_path}: manifest not found")
    root = manifest_path.parent
    m = read_manifest(manifest_path)
    genes = read_identity(root / m["gene_identity"])
    proteins = read_identity(root / m["protein_identity"])
    g_ids, g_feats, g_vals = read_expression(root / m["gene_expression"])
    p_ids, p_feats, p_vals = read_expression(root / m["protein_expression"])
    _check_features(m["gene_expression"], g_feats, genes)
    _check_features(m["protein_expression"], p_feats, proteins)
    s_ids, times, censored = read_survival(root / m["survival"])
    patch_dir = root / m["patch_dir"]
    patch_ids = {p.stem for p in patch_dir.glob("*.hfgp")}

    sources = {"genomic": set(g_ids), "proteomic": set(p_ids), "survival": set(s_ids),
               "pathology": patch_ids}
    ordered = list(dict.fromkeys(g_ids + p_ids + s_ids + sorted(patch_ids)))
    rejected = {}
    kept = []
    for sid in ordered:
        missing = [name for name, ids in sources.items() if sid not in ids]
        if missing:
            rejected[sid] = missing
        else:
            kept.append(sid)
    if not kept:
        raise ReconciliationError(f"no patient is present in every modality; rejected: {rejected}")

    g_idx = {s: i for i, s in enumerate(g_ids)}
    p_idx = {s: i for i, s in enumerate(p_ids)}
    s_idx = {s: i for i, s in enumerate(s_ids)}
    patches = [read_patches(patch_dir / f"{sid}.hfgp") for sid in kept]
    for sid, y in zip(kept, patches):
        if y.shape[1] != proteins.width:
            raise AlignmentError(
                f"patches for {sid} have width {y.shape[1]}, protein identity width is {proteins.width}")
    return Cohort(
        gene_identity=genes,
        protein_identity=proteins,
        sample_ids=tuple(kept),
        gene_expression=g_vals[[g_idx[s] for s in kept]],
        protein_expression=p_vals[[p_idx[s] for s in kept]],
        patches=patches,
        times=times[[s_idx[s] for s in kept]],
        censored=censored[[s_idx[s] for s in kept]],
        rejected=rejected,
    )
