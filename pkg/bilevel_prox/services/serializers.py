# bilevel_prox/services/serializers.py
import csv
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from ..exceptions import TraceFileError
from ..models.certificates import StepCertificate
from ..models.functions import ConvexFunction
from ..models.trace import Trace, TraceRecord
from .convex_core import flatten

TRACE_COLUMNS = [
    "k",
    "eps_k",
    "lambda_k",
    "eta_k",
    "f",
    "g_or_gap",
    "step_norm",
    "eta1",
    "eta2",
    "cert_residual",
    "dist_to_ref",
    "stop_flag",
    "x",
    "sub_pieces",
    "normal_pieces",
    "operator_value",
]


def _num(v: Optional[float]) -> str:
    return "" if v is None else "%.16e" % v


def _vec(v) -> str:
    return "" if v is None else " ".join("%.16e" % c for c in np.asarray(v).reshape(-1))


def _vecs(vs: Sequence) -> str:
    return ";".join(_vec(v) for v in vs)


def _parse_num(s: str) -> Optional[float]:
    return None if s == "" else float(s)


def _parse_vec(s: str) -> Optional[np.ndarray]:
    return None if s == "" else np.array([float(c) for c in s.split()], dtype=np.float64)


def _parse_vecs(s: str) -> List[np.ndarray]:
    return [] if s == "" else [_parse_vec(p) for p in s.split(";")]


def record_to_row(r: TraceRecord) -> Dict[str, str]:
    """Convert a TraceRecord to a CSV row"""
    cert = r.cert
    return {
        "k": str(r.k),
        "eps_k": _num(r.eps),
        "lambda_k": _num(r.lam),
        "eta_k": _num(r.eta),
        "f": _num(r.f_value),
        "g_or_gap": _num(r.g_value),
        "step_norm": _num(r.step_norm),
        "eta1": _num(cert.eta1 if cert else None),
        "eta2": _num(cert.eta2 if cert else None),
        "cert_residual": _num(cert.residual_norm if cert else None),
        "dist_to_ref": _num(r.dist_to_ref),
        "stop_flag": "1" if r.stop_flag else "0",
        "x": _vec(r.x),
        "sub_pieces": _vecs(cert.sub_pieces) if cert else "",
        "normal_pieces": _vecs(cert.normal_pieces) if cert else "",
        "operator_value": _vec(cert.operator_value) if cert else "",
    }


def write_trace(trace: Trace, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for r in trace.records:
            writer.writerow(record_to_row(r))


def read_trace_rows(path: str) -> List[Dict[str, str]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = [c for c in TRACE_COLUMNS if c not in (reader.fieldnames or [])]
            if missing:
                raise TraceFileError(f"trace file lacks columns {missing}")
            return list(reader)
    except OSError as e:
        raise TraceFileError(f"cannot read trace file: {e}")


def row_to_record(row: Dict[str, str], psi: Optional[ConvexFunction] = None) -> TraceRecord:
    """Rebuild a TraceRecord; with psi the step certificate is rebuilt as well.

    The witnesses are not stored: the sub-witness is the weighted sum of the
    pieces over the flattened psi (plus the operator value) and the normal
    witness is the sum of the normal pieces.
    """
    try:
        record = TraceRecord(
            k=int(row["k"]),
            x=_parse_vec(row["x"]),
            f_value=_parse_num(row["f"]),
            g_value=_parse_num(row["g_or_gap"]),
            eps=_parse_num(row["eps_k"]),
            lam=_parse_num(row["lambda_k"]),
            eta=_parse_num(row["eta_k"]),
            step_norm=_parse_num(row["step_norm"]),
            dist_to_ref=_parse_num(row["dist_to_ref"]),
            stop_flag=row["stop_flag"] == "1",
        )
        if psi is not None and row["eta1"] != "":
            record.cert = _certificate_from_row(row, psi)
    except (KeyError, ValueError, TypeError) as e:
        raise TraceFileError(f"malformed trace row {row.get('k', '?')}: {e}")
    return record


def _certificate_from_row(row: Dict[str, Any], psi: ConvexFunction) -> StepCertificate:
    sub_pieces = _parse_vecs(row["sub_pieces"])
    normal_pieces = _parse_vecs(row["normal_pieces"])
    op = _parse_vec(row["operator_value"])
    atoms = flatten(psi)
    if len(sub_pieces) != len(atoms):
        raise TraceFileError(f"row {row['k']} has {len(sub_pieces)} pieces for {len(atoms)} function terms")
    if not normal_pieces:
        raise TraceFileError(f"row {row['k']} has no normal pieces")
    sub_witness = sum((w * p for (w, _), p in zip(atoms, sub_pieces)), np.zeros_like(sub_pieces[0]))
    if op is not None:
        sub_witness = op + sub_witness
    normal_witness = sum(normal_pieces[1:], normal_pieces[0].copy())
    return StepCertificate(
        eta1=float(row["eta1"]),
        eta2=float(row["eta2"]),
        eta_budget=float(row["eta_k"]),
        sub_witness=sub_witness,
        normal_witness=normal_witness,
        residual_norm=float(row["cert_residual"]),
        sub_pieces=tuple(sub_pieces),
        normal_pieces=tuple(normal_pieces),
        operator_value=op,
    )
