"""Flow-record CSV ingestion and a seeded synthetic generator.

The CSV carries the eight gateway-observable features plus ``threat_label``
and ``label_confidence``. Node-state columns (headroom, budgets, temperature,
load) are optional; when absent the replay engine supplies them from its
per-node simulator.
"""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .context import FLOW_FEATURES

LABEL_COLUMNS = ("threat_label", "label_confidence")
NODE_COLUMNS = ("cpu_headroom", "mem_headroom", "latency_budget", "energy_budget",
                "device_temp", "load_proxy")
FLOW_COLUMNS = FLOW_FEATURES + LABEL_COLUMNS
ATTACK_CLASSES = ("botnet", "bruteforce", "ddos", "dos", "portscan")


class DatasetError(ValueError):
    pass


def read_flows(path: str | Path) -> list[dict]:
    """Read a flow CSV into a list of row dicts with numeric fields as floats."""
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise DatasetError(f"cannot open dataset {path}: {exc}") from exc
    rows = []
    with fh:
        reader = csv.DictReader(fh)
        missing = [c for c in FLOW_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise DatasetError(f"{path}: missing columns {missing}")
        for lineno, raw in enumerate(reader, start=2):
            row: dict = {"threat_label": raw["threat_label"].strip()}
            try:
                for col in FLOW_FEATURES + ("label_confidence",):
                    row[col] = float(raw[col])
                for col in NODE_COLUMNS:
                    if raw.get(col) not in (None, ""):
                        row[col] = float(raw[col])
            except (TypeError, ValueError) as exc:
                raise DatasetError(f"{path}:{lineno}: unreadable record ({exc})") from exc
            if not row["threat_label"]:
                raise DatasetError(f"{path}:{lineno}: empty threat_label")
            rows.append(row)
    return rows


def write_flows(path: str | Path, rows: Iterable[dict]) -> None:
    rows = list(rows)
    extra = [c for c in NODE_COLUMNS if any(c in r for r in rows)]
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(FLOW_COLUMNS) + extra, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def _profile(label: str, rng: np.random.Generator) -> dict:
    u = rng.uniform
    row = {
        "packet_rate": u(20, 300),
        "byte_rate": u(1e4, 3e5),
        "connection_duration": u(1, 40),
        "tcp_flag_anomaly": u(0.0, 0.3),
        "dst_port_entropy": u(0.05, 0.4),
        "auth_failure_burst": float(rng.integers(0, 3)),
        "dns_anomaly": u(0.0, 0.3),
        "timeout_irregularity": u(0.0, 0.3),
    }
    if label == "dos":
        row.update(packet_rate=rng.lognormal(np.log(3000), 0.3), byte_rate=u(8e5, 3e6),
                   tcp_flag_anomaly=u(0.45, 0.95))
    elif label == "ddos":
        row.update(packet_rate=rng.lognormal(np.log(5000), 0.35), byte_rate=u(2e6, 8e6),
                   tcp_flag_anomaly=u(0.3, 0.8), dst_port_entropy=u(0.1, 0.5))
    elif label == "botnet":
        row.update(dns_anomaly=u(0.4, 0.95), connection_duration=u(30, 400),
                   packet_rate=u(100, 1500), timeout_irregularity=u(0.1, 0.6))
    elif label == "bruteforce":
        row.update(auth_failure_burst=float(rng.integers(3, 40)),
                   timeout_irregularity=u(0.2, 0.8), connection_duration=u(0.5, 20))
    elif label == "portscan":
        row.update(dst_port_entropy=u(0.5, 0.98), connection_duration=u(0.05, 3),
                   timeout_irregularity=u(0.3, 0.9), packet_rate=u(200, 2000))
    return row


def synthesize_flows(n_per_class: int, classes: Sequence[str] = ATTACK_CLASSES,
                     seed: int = 0) -> list[dict]:
    """Labelled flow windows with class-dependent feature profiles.

    Stand-in for a real labelled capture; rows are grouped by class in the
    order given.
    """
    rng = np.random.default_rng([seed, 0xF10])
    rows = []
    for label in classes:
        for _ in range(n_per_class):
            row = {k: float(v) for k, v in _profile(label, rng).items()}
            row["threat_label"] = label
            row["label_confidence"] = float(rng.uniform(0.75, 0.99))
            rows.append(row)
    return rows
