"""Record persistence: JSON-lines (primary) and CSV, with a provenance
header (spec hash, code version, seed map).

Files are reproducible byte-for-byte for identical runs and seeds; the
header's timestamp field is the only nondeterministic content and is
excluded from digests.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .observables import ObservableRecord

__all__ = [
    "RECORD_SCHEMA_VERSION",
    "make_header",
    "write_jsonl",
    "append_jsonl",
    "read_jsonl",
    "write_csv",
    "read_csv",
    "records_digest",
    "spec_hash",
    "summarize_records",
]

RECORD_SCHEMA_VERSION = 1


def spec_hash(doc: dict) -> str:
    """Canonical sha256 of a run spec (sorted keys, compact separators)."""
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def make_header(spec_doc: dict | None = None, seed_map: dict | None = None,
                extra: dict | None = None) -> dict:
    header = {
        "kind": "header",
        "schema_version": RECORD_SCHEMA_VERSION,
        "spec_hash": spec_hash(spec_doc) if spec_doc is not None else None,
        "code_version": __version__,
        "seed_map": seed_map or {},
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    for k, v in (extra or {}).items():
        if k != "kind":
            header[k] = v
    return header


def _dump(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def write_jsonl(path, records: list[ObservableRecord], header: dict):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        f.write(_dump(header) + "\n")
        for r in records:
            f.write(_dump(r.to_dict()) + "\n")


def append_jsonl(path, records: list[ObservableRecord]):
    with open(path, "a") as f:
        for r in records:
            f.write(_dump(r.to_dict()) + "\n")


def read_jsonl(path) -> tuple[dict, list[ObservableRecord]]:
    header = None
    records = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            if doc.get("kind") == "header":
                header = doc
            else:
                records.append(ObservableRecord.from_dict(doc))
    if header is None:
        raise ValueError(f"{path}: missing header line")
    return header, records


_CSV_FIELDS = ["M_over_Msat", "m_fim", "psi_re", "psi_im", "energy_per_spin",
               "chi", "local_entropy", "metadata"]


def write_csv(path, records: list[ObservableRecord], header: dict):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write("# " + _dump(header) + "\n")
        w = csv.DictWriter(f, fieldnames=_CSV_FIELDS)
        w.writeheader()
        for r in records:
            d = r.to_dict()
            d["metadata"] = _dump(d["metadata"])
            w.writerow({k: d.get(k) for k in _CSV_FIELDS})


def read_csv(path) -> tuple[dict, list[ObservableRecord]]:
    with open(path) as f:
        first = f.readline()
        if not first.startswith("# "):
            raise ValueError(f"{path}: missing header comment line")
        header = json.loads(first[2:])
        records = []
        for row in csv.DictReader(f):
            d = {}
            for k in ("M_over_Msat", "m_fim", "psi_re", "psi_im", "energy_per_spin"):
                d[k] = float(row[k])
            for k in ("chi", "local_entropy"):
                d[k] = float(row[k]) if row[k] not in ("", None) else None
            d["metadata"] = json.loads(row["metadata"])
            records.append(ObservableRecord.from_dict(d))
    return header, records


def records_digest(path) -> str:
    """sha256 of a records file with the header timestamp removed, for
    reproducibility audits."""
    h = hashlib.sha256()
    with open(path) as f:
        for line in f:
            stripped = line.strip()
            body = stripped[2:] if stripped.startswith("# ") else stripped
            try:
                doc = json.loads(body)
            except json.JSONDecodeError:
                h.update(line.encode())
                continue
            if isinstance(doc, dict) and doc.get("kind") == "header":
                doc.pop("timestamp", None)
                h.update(_dump(doc).encode())
            else:
                h.update(line.encode())
    return h.hexdigest()


def summarize_records(records: list[ObservableRecord]) -> str:
    """CSV table with one row per curve point: records grouped by
    (protocol, gamma, beta, rate, direction, H)."""
    import numpy as np

    groups: dict[tuple, list[ObservableRecord]] = {}
    for r in records:
        m = r.metadata
        key = (m.get("protocol"), m.get("gamma_over_J1"), m.get("beta_J1"),
               m.get("rate_sweeps"), m.get("direction"), m.get("H"))
        groups.setdefault(key, []).append(r)

    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["protocol", "gamma_over_J1", "beta_J1", "rate_sweeps", "direction", "H",
                "n", "M_mean", "M_err", "m_fim_mean", "m_fim_err"])
    for key in sorted(groups, key=lambda k: tuple(str(x) for x in k)):
        rs = groups[key]
        ms = np.array([r.M_over_Msat for r in rs])
        fs = np.array([r.m_fim for r in rs])
        err = lambda a: float(np.std(a, ddof=1) / np.sqrt(len(a))) if len(a) > 1 else ""
        w.writerow([*key, len(rs), float(ms.mean()), err(ms), float(fs.mean()), err(fs)])
    return buf.getvalue()
