"""CSV/JSON ingestion, simulation and analysis workflows, report rendering.

Observation files are UTF-8 CSV with a mandatory header
``col_1,...,col_c,quality``; machine indices are 1-based. Lines starting with
``#`` are comments (simulated files carry one describing the generator).
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from importlib import resources
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

from qnet import __version__
from qnet.errors import (
    EmptyDataset,
    IndexOutOfRange,
    DegenerateVariance,
    InsufficientData,
    NodeAbsent,
    NodeUnvisited,
    NonFiniteQuality,
    ParseError,
)
from qnet.estimators import Estimates, estimate
from qnet.inference import bartlett_test, column_report
from qnet.network import NetworkTopology, validate_topology
from qnet.numerics import GENERATOR_ID
from qnet.quality import Dataset, QualityModel, demo_model, generate_dataset, theoretical_moments

ANALYSIS_KINDS = ("mean", "variance", "bartlett")


@dataclass
class AnalysisConfig:
    alpha: float = 0.05
    adjust: str = "by"
    kinds: tuple[str, ...] = ANALYSIS_KINDS
    reference_row: int | None = None  # None means the last machine of each column
    all_pairs: bool = False
    equal_variance: bool = True
    alternative: str = "two-sided"
    min_count_warn: int = 30

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.adjust not in ("by", "none"):
            raise ValueError("adjust must be 'by' or 'none'")
        self.kinds = tuple(self.kinds)
        unknown = set(self.kinds) - set(ANALYSIS_KINDS)
        if unknown or not self.kinds:
            raise ValueError(f"kinds must be a non-empty subset of {ANALYSIS_KINDS}")


# ---------------------------------------------------------------------------
# observations


def _data_lines(handle: TextIO) -> Iterable[tuple[int, str]]:
    for lineno, line in enumerate(handle, start=1):
        if line.startswith("#") or not line.strip():
            continue
        yield lineno, line


def parse_observations(source, topology: NetworkTopology | None = None) -> tuple[NetworkTopology, Dataset]:
    """Read an observation CSV from a path or open text handle.

    Without ``topology`` the network is inferred from column-wise maxima of
    the observed indices; with it, every index is checked against it.
    """
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as handle:
            return parse_observations(handle, topology)

    lines = list(_data_lines(source))
    if not lines:
        raise ParseError("missing header", line=1)
    header_line, header_text = lines[0]
    header = next(csv.reader([header_text]))
    header = [h.strip() for h in header]
    c = len(header) - 1
    expected = [f"col_{j}" for j in range(1, c + 1)] + ["quality"]
    if c < 1 or header != expected:
        raise ParseError(f"header must be {','.join(expected) if c >= 1 else 'col_1,...,quality'}",
                         line=header_line)
    if topology is not None and topology.c != c:
        raise ParseError(f"file has {c} columns but the network has {topology.c}", line=header_line)
    if len(lines) == 1:
        raise EmptyDataset("no observations after the header", line=header_line)

    paths = np.empty((len(lines) - 1, c), dtype=np.int64)
    quality = np.empty(len(lines) - 1)
    for k, row in enumerate(csv.reader([t for _, t in lines[1:]])):
        lineno = lines[k + 1][0]
        if len(row) != c + 1:
            raise ParseError(f"expected {c + 1} fields, got {len(row)}", line=lineno)
        try:
            paths[k] = [int(v) for v in row[:c]]
        except ValueError:
            raise ParseError(f"machine indices must be integers: {row[:c]}", line=lineno) from None
        try:
            q = float(row[c])
        except ValueError:
            raise ParseError(f"quality {row[c]!r} is not a number", line=lineno) from None
        if not math.isfinite(q):
            raise NonFiniteQuality(f"quality {row[c]!r} is not finite", line=lineno)
        quality[k] = q
        bad = np.flatnonzero(paths[k] < 1)
        if topology is not None:
            bad = np.flatnonzero((paths[k] < 1) | (paths[k] > np.asarray(topology.column_sizes)))
        if bad.size:
            j = int(bad[0])
            limit = topology.column_sizes[j] if topology is not None else "inf"
            raise IndexOutOfRange(f"machine index {paths[k, j]} in column {j + 1} outside 1..{limit}",
                                  line=lineno)
    if topology is None:
        topology = validate_topology(paths.max(axis=0).tolist())
    return topology, Dataset(topology, paths, quality)


def format_dataset(dataset: Dataset, comment: str | None = None) -> str:
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    c = dataset.topology.c
    buf.write(",".join([f"col_{j}" for j in range(1, c + 1)] + ["quality"]) + "\n")
    for row, q in zip(dataset.paths.tolist(), dataset.quality.tolist()):
        # repr is the shortest string that round-trips exactly
        buf.write(",".join(map(str, row)) + "," + repr(q) + "\n")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# models


def load_model(source) -> QualityModel:
    if str(source) == "demo":
        return demo_model()
    with open(source, encoding="utf-8") as handle:
        spec = json.load(handle)
    try:
        return QualityModel.from_spec(spec)
    except KeyError as exc:
        raise ParseError(f"model file is missing {exc}") from None


def _nan_to_none(matrix: np.ndarray) -> list:
    return [[None if math.isnan(v) else float(v) for v in row] for row in matrix]


def run_simulate(model: QualityModel, n: int, seed: int, out: Path) -> tuple[Path, Path]:
    """Write ``out`` (CSV) and ``out``'s ``.meta.json`` sidecar; return both paths."""
    if n < 1:
        raise ValueError("n must be >= 1")
    out = Path(out)
    dataset = generate_dataset(model, n, seed)
    text = format_dataset(dataset, f"qnet simulate generator={GENERATOR_ID} seed={seed} n={n}")
    out.write_text(text, encoding="utf-8")
    mean, var = theoretical_moments(model)
    meta = {
        "tool": "qnet",
        "version": __version__,
        "generator": GENERATOR_ID,
        "seed": seed,
        "n": n,
        "model": model.to_spec(),
        "true_mean": _nan_to_none(mean),
        "true_variance": _nan_to_none(var),
        "data_sha256": hashlib.sha256(text.encode("utf-8")).hexdigest(),
    }
    meta_path = out.with_suffix(".meta.json")
    meta_path.write_text(dump_json(meta), encoding="utf-8")
    return out, meta_path


# ---------------------------------------------------------------------------
# analysis


def run_analyze(dataset: Dataset, config: AnalysisConfig) -> dict:
    """Estimates, per-column comparison reports and Bartlett tests as a JSON-ready dict.

    Columns whose machines do not meet a test's preconditions are reported
    under ``skipped`` with the reason instead of failing the whole run.
    """
    est = estimate(dataset)
    columns = []
    flags = []
    for j in range(1, dataset.topology.c + 1):
        entry = {"col": j, "mean": None, "variance": None, "bartlett": None, "skipped": []}
        for kind in ("mean", "variance"):
            if kind not in config.kinds:
                continue
            try:
                rep = column_report(
                    est, j, config.alpha, kind, reference=config.reference_row, all_pairs=config.all_pairs,
                    adjust=config.adjust, equal_variance=config.equal_variance,
                    alternative=config.alternative, min_count_warn=config.min_count_warn)
            except (InsufficientData, DegenerateVariance, NodeAbsent, NodeUnvisited) as exc:
                entry["skipped"].append({"kind": kind, "reason": str(exc)})
                continue
            entry[kind] = rep.to_dict()
            flags += [{"col": j, "row": c.node[0], "kind": kind, "p_adj": c.p_adj} for c in rep.flagged]
        if "bartlett" in config.kinds:
            if dataset.topology.column_sizes[j - 1] < 2:
                entry["skipped"].append({"kind": "bartlett", "reason": "single machine"})
            else:
                try:
                    res = bartlett_test(est, j)
                except (InsufficientData, DegenerateVariance) as exc:
                    entry["skipped"].append({"kind": "bartlett", "reason": str(exc)})
                else:
                    entry["bartlett"] = res.to_dict()
                    if res.p_value < config.alpha:
                        flags.append({"col": j, "row": None, "kind": "bartlett", "p_adj": res.p_value})
        columns.append(entry)
    return {
        "tool": "qnet",
        "version": __version__,
        "n": int(est.n),
        "config": asdict(config) | {"kinds": list(config.kinds)},
        "estimates": est.to_dict(),
        "columns_report": columns,
        "flags": flags,
    }


def report_is_empty(report: dict) -> bool:
    """True when every requested test was skipped."""
    return all(c["mean"] is None and c["variance"] is None and c["bartlett"] is None
               for c in report["columns_report"])


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


# ---------------------------------------------------------------------------
# text rendering


def _fmt(v, digits=2) -> str:
    return "-" if v is None else f"{v:.{digits}f}"


def render_matrix(name: str, est: Estimates, matrix: np.ndarray) -> str:
    """Matrix view with ``*`` at non-existent machines, rounded to two decimals."""
    exists = est.topology.exists_mask()
    cells = [["*" if not exists[i, j] else ("-" if est.counts[i, j] == 0 else f"{matrix[i, j]:.2f}")
              for j in range(est.topology.c)] for i in range(est.topology.r)]
    width = max(len(c) for row in cells for c in row)
    lines = [f"{name} ="]
    lines += ["  [ " + "  ".join(c.rjust(width) for c in row) + " ]" for row in cells]
    return "\n".join(lines)


def render_estimates(est: Estimates) -> str:
    parts = [f"n = {est.n}, columns = {list(est.topology.column_sizes)}",
             render_matrix("T", est, est.T), render_matrix("Sigma", est, est.Sigma), machine_table(est)]
    return "\n\n".join(parts) + "\n"


def machine_table(est: Estimates, report: dict | None = None) -> str:
    """One line per existing machine with its estimates and test results."""
    results = {}
    if report is not None:
        for col in report["columns_report"]:
            for kind in ("mean", "variance"):
                if col[kind] is not None:
                    for comp in col[kind]["comparisons"]:
                        results[(col["col"], comp["row"], kind)] = comp
    header = ["col", "row", "count", "T", "Sigma"]
    if report is not None:
        header += ["p_mean", "padj_mean", "p_var", "padj_var", "flag"]
    rows = []
    flagged = {(f["col"], f["row"], f["kind"]) for f in (report or {}).get("flags", [])}
    for i, j in est.topology.nodes():
        count = int(est.counts[i - 1, j - 1])
        line = [str(j), str(i), str(count),
                _fmt(est.T[i - 1, j - 1] if count else None), _fmt(est.Sigma[i - 1, j - 1] if count else None)]
        if report is not None:
            m = results.get((j, i, "mean"), {})
            v = results.get((j, i, "variance"), {})
            marks = [k for k in ("mean", "variance") if (j, i, k) in flagged]
            line += [_fmt(m.get("p_raw"), 4), _fmt(m.get("p_adj"), 4),
                     _fmt(v.get("p_raw"), 4), _fmt(v.get("p_adj"), 4), ",".join(marks) or "."]
        rows.append(line)
    widths = [max(len(h), *(len(r[k]) for r in rows)) for k, h in enumerate(header)]
    out = ["  ".join(h.rjust(w) for h, w in zip(header, widths))]
    out += ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows]
    return "\n".join(out)


def render_report(report: dict, est: Estimates) -> str:
    cfg = report["config"]
    parts = [f"n = {report['n']}, columns = {report['estimates']['columns']}, alpha = {cfg['alpha']}, "
             f"adjust = {cfg['adjust']}",
             render_matrix("T", est, est.T), render_matrix("Sigma", est, est.Sigma),
             machine_table(est, report)]
    bart = []
    for col in report["columns_report"]:
        if col["bartlett"] is not None:
            b = col["bartlett"]
            bart.append(f"  column {col['col']}: statistic {b['statistic']:.4f}, df {b['df']}, p {b['p_value']:.4g}")
        for skip in col["skipped"]:
            bart.append(f"  column {col['col']}: {skip['kind']} skipped ({skip['reason']})")
    if bart:
        parts.append("Bartlett / skipped:\n" + "\n".join(bart))
    if report["flags"]:
        parts.append("Flagged:\n" + "\n".join(
            f"  column {f['col']}" + (f" machine {f['row']}" if f["row"] is not None else "")
            + f" [{f['kind']}] p_adj = {f['p_adj']:.3g}" for f in report["flags"]))
    else:
        parts.append("Flagged: none")
    return "\n\n".join(parts) + "\n"


def report_schema() -> dict:
    """The JSON schema every ``qnet analyze`` report validates against."""
    return json.loads(resources.files("qnet").joinpath("schemas/report.schema.json").read_text(encoding="utf-8"))
