"""File formats: datasets, moment columns, chain CSVs, measure configs.

Every CSV written here starts with a comment line recording the package
version, seed, and argv, then a header row. Dataset files are plain
whitespace-separated ``<time> <count> <haplotype>`` records.
"""

from __future__ import annotations

import csv
from importlib import resources
from pathlib import Path

import numpy as np

from .exceptions import DataFormatError
from .genealogy import TimeSeriesData
from .measures import DEFAULT_ETA, LambdaMeasure, TruncNormKernel
from .prior import PriorSpec

PACKAGE_VERSION = "0.1.0"


def comment_line(seed=None, argv=None) -> str:
    parts = [f"lambda-infer {PACKAGE_VERSION}"]
    if seed is not None:
        parts.append(f"seed={seed}")
    if argv is not None:
        parts.append("argv=" + " ".join(str(a) for a in argv))
    return "# " + " ".join(parts)


# --------------------------------------------------------------------------
# Datasets
# --------------------------------------------------------------------------


def read_dataset(path) -> TimeSeriesData:
    """Parse ``<time> <count> <haplotype>`` records into time batches."""
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"dataset file {path} does not exist")
    batches: dict[float, dict[str, int]] = {}
    hap_len = None
    lines = path.read_text().splitlines()
    records = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 3:
            raise DataFormatError(
                f"{path}:{lineno}: expected '<time> <count> <haplotype>', got {raw!r}"
            )
        try:
            t = float(fields[0])
            count = int(fields[1])
        except ValueError:
            raise DataFormatError(f"{path}:{lineno}: malformed time or count") from None
        hap = fields[2]
        if count <= 0:
            raise DataFormatError(f"{path}:{lineno}: counts must be positive")
        if hap_len is None:
            hap_len = len(hap)
        elif len(hap) != hap_len:
            raise DataFormatError(
                f"{path}:{lineno}: haplotype length {len(hap)} != {hap_len}"
            )
        batches.setdefault(t, {})
        batches[t][hap] = batches[t].get(hap, 0) + count
        records += 1
    if not records:
        raise DataFormatError(f"{path}: no records found")
    times = sorted(batches)
    return TimeSeriesData(tuple((t, tuple(sorted(batches[t].items()))) for t in times))


def write_dataset(data: TimeSeriesData, path, seed=None, argv=None) -> None:
    lines = [comment_line(seed, argv)]
    for t, counts in data.batches:
        for hap, c in counts:
            lines.append(f"{t:g} {c} {hap}")
    Path(path).write_text("\n".join(lines) + "\n")


def fixture_path(name: str) -> Path:
    """Path of a bundled dataset (``bs`` or ``kingman``)."""
    ref = resources.files("lambdainfer").joinpath(f"data/{name}.tsv")
    return Path(str(ref))


# --------------------------------------------------------------------------
# Moment columns
# --------------------------------------------------------------------------


def write_moments(values, path_or_fh, seed=None, argv=None) -> None:
    """Single-column CSV with header lambda_k; first row is lambda_3."""
    own = isinstance(path_or_fh, (str, Path))
    fh = open(path_or_fh, "w", newline="") if own else path_or_fh
    try:
        fh.write(comment_line(seed, argv) + "\n")
        fh.write("lambda_k\n")
        for v in values:
            fh.write(f"{float(v):.17g}\n")
    finally:
        if own:
            fh.close()


def read_moments(path) -> np.ndarray:
    rows = _read_csv_rows(path)
    if not rows or rows[0] != ["lambda_k"]:
        raise DataFormatError(f"{path}: expected a single 'lambda_k' column")
    try:
        return np.array([float(r[0]) for r in rows[1:]])
    except ValueError:
        raise DataFormatError(f"{path}: non-numeric moment entry") from None


def _read_csv_rows(path) -> list[list[str]]:
    with open(path, newline="") as fh:
        return [row for row in csv.reader(fh) if row and not row[0].startswith("#")]


# --------------------------------------------------------------------------
# Chain CSVs
# --------------------------------------------------------------------------


def write_chain(result, path, argv=None) -> None:
    """Chain trace: step, parameters, moment read-out, diagnostics."""
    names = result.parameter_names()
    order = result.config.moment_order
    header = (
        ["step"]
        + names
        + [f"lambda{k}" for k in range(3, order + 1)]
        + ["log_estimate", "accepted", "stage1_accepted", "wall_ms"]
    )
    with open(path, "w", newline="") as fh:
        fh.write(comment_line(result.config.seed, argv) + "\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(result.params.shape[0]):
            writer.writerow(
                [i]
                + [f"{v:.17g}" for v in result.params[i]]
                + [f"{v:.17g}" for v in result.moments[i]]
                + [
                    f"{result.log_estimate[i]:.17g}",
                    int(result.accepted[i]),
                    int(result.stage1_accepted[i]),
                    f"{result.wall_ms[i]:.3f}",
                ]
            )


def read_chain_traces(path) -> dict[str, np.ndarray]:
    """Columns of a chain CSV keyed by header name."""
    rows = _read_csv_rows(path)
    if not rows:
        raise DataFormatError(f"{path}: empty chain file")
    header, body = rows[0], rows[1:]
    if "step" not in header:
        raise DataFormatError(f"{path}: missing 'step' column")
    cols = {name: np.empty(len(body)) for name in header}
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise DataFormatError(f"{path}: row {i + 2} has {len(row)} fields")
        for name, val in zip(header, row):
            cols[name][i] = float(val)
    return cols


# --------------------------------------------------------------------------
# Flat key = value configs
# --------------------------------------------------------------------------


def parse_flat_config(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataFormatError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = line.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def _parse_tuples(text: str, arity: int, what: str) -> list[tuple[float, ...]]:
    text = text.strip()
    if not text:
        return []
    out = []
    for part in text.split(","):
        fields = part.split(":")
        if len(fields) != arity:
            raise DataFormatError(f"{what} entries need {arity} ':'-separated numbers")
        out.append(tuple(float(f) for f in fields))
    return out


def read_measure_config(path) -> LambdaMeasure:
    """Measure spec file: kingman_mass, atoms = loc:w,..., kernels =
    loc:sigma:w,..., eta."""
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"measure config {path} does not exist")
    cfg = parse_flat_config(path.read_text())
    known = {"kingman_mass", "atoms", "kernels", "eta"}
    unknown = set(cfg) - known
    if unknown:
        raise DataFormatError(f"unknown measure config keys: {sorted(unknown)}")
    eta = float(cfg.get("eta", DEFAULT_ETA))
    atoms = tuple(
        (loc, w) for loc, w in _parse_tuples(cfg.get("atoms", ""), 2, "atoms")
    )
    kernels = tuple(
        TruncNormKernel(loc, sig, w)
        for loc, sig, w in _parse_tuples(cfg.get("kernels", ""), 3, "kernels")
    )
    return LambdaMeasure(
        kingman_mass=float(cfg.get("kingman_mass", 0.0)),
        atoms=atoms,
        kernels=kernels,
        eta=eta,
    )


def write_measure_config(measure: LambdaMeasure, path) -> None:
    if measure.betas:
        raise DataFormatError(
            "measure config files cover atom/kernel measures; use a named measure "
            "for beta-density families"
        )
    lines = [
        f"kingman_mass = {measure.kingman_mass:.17g}",
        "atoms = " + ", ".join(f"{l:.17g}:{w:.17g}" for l, w in measure.atoms),
        "kernels = "
        + ", ".join(f"{k.loc:.17g}:{k.sigma:.17g}:{k.weight:.17g}" for k in measure.kernels),
        f"eta = {measure.eta:.17g}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def read_prior_config(path) -> PriorSpec:
    """Prior spec keys: eta, truncation, alpha0, sigma_prior = a,b."""
    cfg = parse_flat_config(Path(path).read_text())
    known = {"eta", "truncation", "alpha0", "sigma_prior"}
    unknown = set(cfg) - known
    if unknown:
        raise DataFormatError(f"unknown prior config keys: {sorted(unknown)}")
    kwargs = {}
    if "eta" in cfg:
        kwargs["eta"] = float(cfg["eta"])
    if "truncation" in cfg:
        kwargs["truncation"] = int(cfg["truncation"])
    if "alpha0" in cfg:
        kwargs["alpha0"] = float(cfg["alpha0"])
    if "sigma_prior" in cfg:
        a, b = (float(x) for x in cfg["sigma_prior"].split(","))
        kwargs["sigma_prior"] = (a, b)
    return PriorSpec(**kwargs)
