"""End-to-end runs: partition, select, measure, certify, report."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bounds
from .exceptions import ParameterError
from .generators import generate, parse_generator
from .matrix_io import load_matrix
from .numkernel import DEFAULT_TOLERANCES, Tolerances, as_matrix, singular_values, tail_energy
from .partitioner import InitKind, PartitionConfig, partition_from_sets
from .pipeline import (
    Algorithm,
    CurResult,
    PipelineResult,
    SetSelection,
    build_cur,
    id_error,
    partition_columns,
    partitioned_cssp,
)
from .selectors import SelectorSpec

SCHEMA_VERSION = 1
EXIT_OK, EXIT_ERROR, EXIT_BOUND_FALSIFIED = 0, 1, 2


@dataclass(frozen=True)
class RunConfig:
    selector: SelectorSpec
    r: int
    k: int = 1
    algorithm: Algorithm = Algorithm.CVOD
    input: str | None = None
    generator: str | None = None
    epsilon: float = 1e-8
    max_iters: int = 100
    seed: int = 0
    dims: tuple | None = None
    init: InitKind = InitKind.RANDOM_BALANCED
    report: str | None = None
    report_format: str = "json"
    strict: bool = False
    cur: bool = False
    threads: int = 1
    relative: bool = False

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        object.__setattr__(self, "init", InitKind(self.init))
        if (self.input is None) == (self.generator is None):
            raise ParameterError("give exactly one of an input path or a generator spec")
        if self.dims is not None and self.algorithm is not Algorithm.CVOD:
            raise ParameterError("dims are only meaningful with the cvod algorithm")
        if self.init is InitKind.PROVIDED:
            raise ParameterError("init='provided' is library-only")
        if self.report_format not in ("json", "text"):
            raise ParameterError("report format must be json or text")

    def partition_config(self) -> PartitionConfig:
        k = 1 if self.algorithm is Algorithm.NONE else self.k
        return PartitionConfig(
            k=k, r=self.r, dims=self.dims, epsilon=self.epsilon, max_iters=self.max_iters,
            init=self.init, seed=self.seed, relative=self.relative, threads=self.threads,
        )

    def as_dict(self) -> dict:
        return {
            "input": self.input,
            "generator": self.generator,
            "algorithm": self.algorithm.value,
            "selector": str(self.selector),
            "k": self.k,
            "r": self.r,
            "epsilon": self.epsilon,
            "max_iters": self.max_iters,
            "seed": self.seed,
            "dims": list(self.dims) if self.dims is not None else None,
            "init": self.init.value,
            "strict": self.strict,
            "cur": self.cur,
            "relative": self.relative,
        }


@dataclass
class RunReport:
    """Machine-readable outcome of one run.

    Column indices are 0-based. ``timing_ms`` is the only field that varies
    between identical runs.
    """

    config: dict
    matrix: dict
    partition: dict
    trace: dict | None
    selection: dict
    id_error: float
    baseline: float
    bounds: list
    cur: dict | None = None
    timing_ms: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION
    kind: str = "run"

    @property
    def all_satisfied(self) -> bool:
        return all(b["satisfied"] for b in self.bounds)

    @property
    def exit_code(self) -> int:
        return EXIT_OK if self.all_satisfied else EXIT_BOUND_FALSIFIED

    def as_dict(self, timing: bool = True) -> dict:
        d = dataclasses.asdict(self)
        if not timing:
            d.pop("timing_ms")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ParameterError(f"unsupported report schema_version {d.get('schema_version')!r}")
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.as_dict(timing), indent=2, sort_keys=True, allow_nan=False,
                          default=_json_default) + "\n"


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _finite(x: float):
    return float(x) if math.isfinite(x) else str(x)


def _clean(obj):
    """Replace non-finite floats (e.g. an infinite covering factor) by strings."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float):
        return _finite(obj)
    return obj


def fingerprint(a: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(a, dtype="<f8").tobytes()).hexdigest()


def _matrix_summary(a: np.ndarray, s: np.ndarray) -> dict:
    return {
        "rows": a.shape[0],
        "cols": a.shape[1],
        "frobenius_norm": float(np.linalg.norm(a)),
        "singular_values": [float(x) for x in s],
        "sha256": fingerprint(a),
    }


def load_input(config: RunConfig) -> np.ndarray:
    if config.input is not None:
        return as_matrix(load_matrix(config.input))
    kind, params = parse_generator(config.generator)
    return as_matrix(generate(kind, params, seed=config.seed))


def _cur_summary(cur: CurResult) -> dict:
    return {
        "row_indices": [int(j) for j in cur.row_indices],
        "column_indices": [int(j) for j in cur.column_indices],
        "error": cur.error,
        "row_partition": cur.row_partition.summary(),
        "row_selection": cur.row_result.as_dict(),
        "row_trace": cur.traces[1].as_dict() if cur.traces[1] is not None else None,
    }


def run(config: RunConfig, tol: Tolerances = DEFAULT_TOLERANCES, matrix=None) -> RunReport:
    """Execute one configured run; ``matrix`` skips loading when given."""
    timing = {}
    t = time.perf_counter()
    a = as_matrix(matrix) if matrix is not None else load_input(config)
    s = singular_values(a)
    timing["load"] = (time.perf_counter() - t) * 1e3

    t = time.perf_counter()
    partition, trace = partition_columns(a, config.algorithm, config.partition_config(), tol)
    timing["partition"] = (time.perf_counter() - t) * 1e3

    t = time.perf_counter()
    result = partitioned_cssp(a, partition, config.selector, strict=config.strict, tol=tol)
    err = id_error(a, result.c, tol)
    timing["select"] = (time.perf_counter() - t) * 1e3

    cur = None
    if config.cur:
        t = time.perf_counter()
        cur = build_cur(a, config.selector, config.partition_config(), config.algorithm,
                        strict=config.strict, tol=tol)
        timing["cur"] = (time.perf_counter() - t) * 1e3

    t = time.perf_counter()
    reports = bounds.check_all(a, partition, result, config.r, cur, tol)
    timing["bounds"] = (time.perf_counter() - t) * 1e3

    return RunReport(
        config=config.as_dict(),
        matrix=_matrix_summary(a, s),
        partition=partition.summary(),
        trace=trace.as_dict() if trace is not None else None,
        selection=result.as_dict(),
        id_error=err,
        baseline=math.sqrt(tail_energy(s, config.r)),
        bounds=_clean([b.as_dict() for b in reports]),
        cur=_cur_summary(cur) if cur is not None else None,
        timing_ms=timing,
        tolerances=tol.as_dict(),
    )


def _rebuild_selection(a: np.ndarray, partition, selection: dict) -> PipelineResult:
    per_set = []
    for item in selection["per_set"]:
        i = int(item["set_index"])
        idx = np.asarray(partition.sets[i], dtype=np.intp)
        local = np.asarray(item["local_indices"], dtype=np.intp)
        gidx = idx[local]
        if not np.array_equal(gidx, np.asarray(item["global_indices"], dtype=np.intp)):
            raise ParameterError(f"report is inconsistent: set {i} local/global indices disagree")
        per_set.append(SetSelection(i, local, gidx, a[:, gidx], int(item["requested"])))
    gi = np.asarray(selection["global_indices"], dtype=np.intp)
    return PipelineResult(gi, a[:, gi], per_set, list(selection["order"]), int(selection["r_requested"]))


def verify(input_path, report_path, tol: Tolerances = DEFAULT_TOLERANCES) -> RunReport:
    """Recompute every bound from a saved report and the matrix it was run on."""
    a = as_matrix(load_matrix(input_path))
    saved = RunReport.from_dict(json.loads(Path(report_path).read_text(encoding="utf-8")))
    if saved.matrix.get("sha256") != fingerprint(a):
        raise ParameterError("matrix does not match the one recorded in the report")
    s = singular_values(a)
    r = int(saved.config["r"])
    t = time.perf_counter()
    partition = partition_from_sets(a, saved.partition["sets"], saved.partition["dims"], tol)
    result = _rebuild_selection(a, partition, saved.selection)
    cur = None
    if saved.cur is not None:
        rp = saved.cur["row_partition"]
        row_partition = partition_from_sets(a.T, rp["sets"], rp["dims"], tol)
        row_result = _rebuild_selection(a.T, row_partition, saved.cur["row_selection"])
        c, rmat = result.c, row_result.c.T
        x = np.linalg.lstsq(c, a, rcond=None)[0]
        u = np.linalg.lstsq(rmat.T, x.T, rcond=None)[0].T
        err = float(np.linalg.norm(a - c @ u @ rmat))
        cur = CurResult(c, u, rmat, row_result.global_indices, result.global_indices, err,
                        result, row_result, partition, row_partition)
    reports = bounds.check_all(a, partition, result, r, cur, tol)
    return RunReport(
        config=saved.config,
        matrix=_matrix_summary(a, s),
        partition=partition.summary(),
        trace=saved.trace,
        selection=result.as_dict(),
        id_error=id_error(a, result.c, tol),
        baseline=math.sqrt(tail_energy(s, r)),
        bounds=_clean([b.as_dict() for b in reports]),
        cur=saved.cur if cur is None else {**saved.cur, "error": cur.error},
        timing_ms={"verify": (time.perf_counter() - t) * 1e3},
        tolerances=tol.as_dict(),
        kind="verify",
    )


def render_text(report: RunReport) -> str:
    """Human-readable summary; column indices are 1-based here."""
    cfg = report.config
    lines = [
        f"cvodcssp {report.kind} (schema {report.schema_version})",
        f"matrix      {report.matrix['rows']} x {report.matrix['cols']}, "
        f"||A||_F = {report.matrix['frobenius_norm']:.6g}",
        f"algorithm   {cfg['algorithm']}  selector {cfg['selector']}  k={cfg['k']}  r={cfg['r']}  seed={cfg['seed']}",
        f"partition   k={report.partition['k']}  dims={report.partition['dims']}  "
        f"sizes={report.partition['set_sizes']}",
    ]
    if report.trace is not None:
        tr = report.trace
        lines.append(f"lloyd       {tr['iterations']} iterations, stop={tr['stop_reason']}, "
                     f"final energy {tr['final_energy']:.6g}")
    sel = report.selection
    lines.append(f"selected    {sel['r_achieved']} of {sel['r_requested']} columns (1-based): "
                 + " ".join(str(j + 1) for j in sel["global_indices"]))
    lines.append(f"id error    {report.id_error:.6g}   optimal rank-r error {report.baseline:.6g}")
    if report.cur is not None:
        lines.append(f"cur         error {report.cur['error']:.6g}, rows (1-based): "
                     + " ".join(str(j + 1) for j in report.cur["row_indices"]))
    lines.append("bounds:")
    for b in report.bounds:
        flag = "ok  " if b["satisfied"] else "FAIL"
        lines.append(f"  [{flag}] {b['name']:<18} lhs={b['lhs']:.6g}  rhs={b['rhs']:.6g}  slack={b['slack']:.3g}")
        for w in b["warnings"]:
            lines.append(f"         warning: {w}")
    if report.timing_ms:
        lines.append("timing (ms): " + ", ".join(f"{k}={v:.1f}" for k, v in report.timing_ms.items()))
    return "\n".join(lines) + "\n"
