"""Corpus CSV files, synthetic V/RN corpora, model files and report exports.

Corpus CSV: one row per measurement with columns ``picture_id``, ``group``
(V or RN), ``target_mpa`` and any non-empty subset of ``feret_um``,
``area_um2``, ``aspect_ratio``.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import ActivationKind, ContractError, Network, SimResNetError
from .metrics import ErrorReport
from .trainer import FEATURES, GROUPS, NormalizationTransform, PictureSample

FORMAT_VERSION = 1

FEATURE_COLUMNS = {"feret": "feret_um", "area": "area_um2", "aspect_ratio": "aspect_ratio"}
COLUMN_FEATURES = {v: k for k, v in FEATURE_COLUMNS.items()}
REQUIRED_COLUMNS = ("picture_id", "group", "target_mpa")


class ParseError(SimResNetError, ValueError):
    def __init__(self, message: str, row: int | None = None):
        where = f"row {row}: " if row is not None else ""
        super().__init__(where + message)
        self.row = row


class ModelFileError(SimResNetError, ValueError):
    pass


def fmt(x: float) -> str:
    """Shortest decimal that round-trips the float."""
    return repr(float(x))


# ---------------------------------------------------------------------------
# corpus files


def load_pictures(path, features: Sequence[str] | None = None) -> list[PictureSample]:
    """Read a corpus CSV and group its rows into validated PictureSamples.

    Every feature column present in the header is loaded unless ``features``
    restricts the selection. Row numbers in errors count the header as row 1.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path} is empty") from None
        header = [h.strip() for h in header]
        for col in REQUIRED_COLUMNS:
            if col not in header:
                raise ParseError(f"missing required column {col!r}", row=1)
        present = [f for f in FEATURES if FEATURE_COLUMNS[f] in header]
        if features is not None:
            missing = [f for f in features if f not in present]
            if missing:
                raise ParseError(f"missing feature columns for {missing}", row=1)
            present = list(features)
        if not present:
            raise ParseError("no feature columns (feret_um, area_um2, aspect_ratio)", row=1)
        pos = {name: header.index(name) for name in header}
        feat_pos = [pos[FEATURE_COLUMNS[f]] for f in present]

        groups: dict[str, dict] = {}
        for rownum, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} cells, got {len(row)}", row=rownum)
            pid = row[pos["picture_id"]].strip()
            grp = row[pos["group"]].strip()
            if not pid:
                raise ParseError("empty picture_id", row=rownum)
            if grp not in GROUPS:
                raise ParseError(f"group must be V or RN, got {grp!r}", row=rownum)
            try:
                target = float(row[pos["target_mpa"]])
                values = [float(row[p]) for p in feat_pos]
            except ValueError as exc:
                raise ParseError(f"non-numeric cell ({exc})", row=rownum) from None
            entry = groups.get(pid)
            if entry is None:
                groups[pid] = {"group": grp, "target": target, "rows": [values], "first": rownum}
                continue
            if target != entry["target"]:
                raise ParseError(
                    f"target {target} differs from {entry['target']} given for picture "
                    f"{pid!r} in row {entry['first']}",
                    row=rownum,
                )
            if grp != entry["group"]:
                raise ParseError(f"group changes within picture {pid!r}", row=rownum)
            entry["rows"].append(values)
    if not groups:
        raise ParseError(f"{path} has no data rows")
    pictures = []
    for pid, entry in groups.items():
        try:
            pictures.append(
                PictureSample(pid, entry["group"], np.array(entry["rows"]), entry["target"], tuple(present))
            )
        except ContractError as exc:
            raise ParseError(str(exc), row=entry["first"]) from None
    return pictures


def write_pictures(pictures: Sequence[PictureSample], path) -> None:
    if not pictures:
        raise ContractError("nothing to write")
    names = pictures[0].feature_names
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(REQUIRED_COLUMNS) + [FEATURE_COLUMNS[n] for n in names])
        for p in pictures:
            if p.feature_names != names:
                raise ContractError("pictures disagree on their feature columns")
            for row in p.features:
                w.writerow([p.picture_id, p.group, fmt(p.target)] + [fmt(v) for v in row])


# ---------------------------------------------------------------------------
# synthetic corpora


@dataclass(frozen=True)
class GroupSpec:
    """Lognormal (mu, s) parameters of each feature channel and of the target.

    Synthetic stand-in for measured micrographs. ``coupling`` in [0, 1) is
    the share of each feature's log-space spread that is shared by all
    measurements of a picture and tied to that picture's target: a picture
    with a high limit has systematically smaller nodules. The marginal
    log-moments of every channel stay (mu, s).
    """

    group: str
    features: dict = field(default_factory=dict)
    target: tuple = (math.log(300.0), 0.08)
    coupling: float = 0.0

    def __post_init__(self):
        if self.group not in GROUPS:
            raise ContractError(f"unknown group {self.group!r}")
        if set(self.features) - set(FEATURES) or not self.features:
            raise ContractError(f"features must be a non-empty subset of {FEATURES}")
        for name, (_, s) in list(self.features.items()) + [("target", self.target)]:
            if not s > 0:
                raise ContractError(f"{name}: lognormal spread must be positive")
        if not 0.0 <= self.coupling < 1.0:
            raise ContractError("coupling must lie in [0, 1)")


# Synthetic defaults, not measured values. They only encode the orderings
# that matter: RN has the higher mean limit and the larger scatter, V has
# larger, more elongated nodules than RN.
V_SPEC = GroupSpec(
    "V",
    {
        "feret": (math.log(40.0), 0.3),
        "area": (math.log(600.0), 0.55),
        "aspect_ratio": (math.log(1.8), 0.25),
    },
    target=(math.log(300.0), 0.08),
    coupling=0.0,
)
RN_SPEC = GroupSpec(
    "RN",
    {
        "feret": (math.log(25.0), 0.5),
        "area": (math.log(300.0), 0.9),
        "aspect_ratio": (math.log(1.2), 0.15),
    },
    target=(math.log(340.0), 0.16),
    coupling=0.0,
)
DEFAULT_SPECS = {"V": V_SPEC, "RN": RN_SPEC}


def gen_synthetic(spec: GroupSpec, P: int = 70, M: int = 150, seed: int = 0) -> list[PictureSample]:
    """Draw ``P`` pictures of ``M`` measurements each; aspect ratios are clipped to >= 1."""
    if P < 1 or M < 1:
        raise ContractError("P and M must be positive")
    rng = np.random.default_rng([seed, 0 if spec.group == "V" else 1])
    names = tuple(f for f in FEATURES if f in spec.features)
    c = spec.coupling
    within = math.sqrt(1.0 - c * c)
    pictures = []
    for j in range(P):
        z = rng.standard_normal()
        target = math.exp(spec.target[0] + spec.target[1] * z)
        cols = []
        for name in names:
            mu, s = spec.features[name]
            logs = mu + s * (-c * z + within * rng.standard_normal(M))
            vals = np.exp(logs)
            if name == "aspect_ratio":
                vals = np.maximum(vals, 1.0)
            cols.append(vals)
        pictures.append(
            PictureSample(f"{spec.group}-{j:03d}", spec.group, np.column_stack(cols), target, names)
        )
    return pictures


# ---------------------------------------------------------------------------
# model files


@dataclass(frozen=True)
class ModelFile:
    network: Network
    transform: NormalizationTransform | None
    seed: int | None = None


def model_to_dict(net: Network, transform: NormalizationTransform | None, seed=None) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "feature_dim": net.feature_dim,
        "width": net.width,
        "depth": net.depth,
        "dt": net.dt,
        "activation": net.activation.value,
        "layers": [
            {"weight": layer.weight.tolist(), "bias": layer.bias.tolist()} for layer in net.layers
        ],
        "normalization": transform.to_dict() if transform is not None else None,
        "seed": seed,
    }


def model_from_dict(data: dict) -> ModelFile:
    if not isinstance(data, dict):
        raise ModelFileError("model file must hold a JSON object")
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFileError(f"unsupported model format version {version!r}")
    try:
        layers = data["layers"]
        weights = np.array([layer["weight"] for layer in layers], dtype=float)
        biases = np.array([layer["bias"] for layer in layers], dtype=float)
        net = Network.from_arrays(
            weights, biases, float(data["dt"]), ActivationKind.parse(data["activation"]),
            int(data["feature_dim"]),
        )
        if (net.width, net.depth) != (int(data["width"]), int(data["depth"])):
            raise ModelFileError("declared width/depth disagree with the stored layers")
        norm = data.get("normalization")
        transform = NormalizationTransform.from_dict(norm) if norm is not None else None
    except ModelFileError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"malformed model file: {exc}") from None
    seed = data.get("seed")
    return ModelFile(net, transform, None if seed is None else int(seed))


def save_model(net: Network, transform: NormalizationTransform | None, path, seed=None) -> None:
    text = json.dumps(model_to_dict(net, transform, seed), indent=1)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_model(path) -> ModelFile:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"{path}: corrupt model file ({exc})") from None
    return model_from_dict(data)


# ---------------------------------------------------------------------------
# report exports


def write_error_report(report: ErrorReport, csv_path, json_path, config: dict | None = None) -> None:
    with Path(csv_path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["picture_id", "eta"])
        for pid, eta in report.per_picture:
            w.writerow([pid, fmt(eta)])
    summary = {"eta_bar": report.eta_bar, "theta": report.theta, "P": report.P, "config": config or {}}
    write_json(summary, json_path)


def write_histogram_csv(rows, path) -> None:
    """Rows of (picture_id, series, Histogram) in long format."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["picture_id", "series", "bin_left", "bin_right", "count"])
        for pid, series, hist in rows:
            for lo, hi, count in hist.rows():
                w.writerow([pid, series, fmt(lo), fmt(hi), count])


def write_json(data, path) -> None:
    Path(path).write_text(json.dumps(data, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def write_csv(header, rows, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, float) else v for v in row])


def ensure_parent(path) -> None:
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
