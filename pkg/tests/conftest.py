import json
from pathlib import Path

import pytest

from aspo.catalog import load_catalog
from aspo.context import BudgetVector, StructuredContext, TelemetryVector

# gateway reading from the reference DoS console trace
APPENDIX_DOS = {
    "packet_rate": 3250.0,
    "byte_rate": 2.4e6,
    "connection_duration": 12.0,
    "tcp_flag_anomaly": 0.71,
    "dst_port_entropy": 0.22,
    "auth_failure_burst": 0.0,
    "dns_anomaly": 0.1,
    "timeout_irregularity": 0.1,
    "cpu_headroom": 0.58,
    "mem_headroom": 0.69,
    "latency_budget": 95.0,
    "energy_budget": 64.0,
    "device_temp": 44.0,
    "load_proxy": 0.6,
    "threat_label": "dos",
    "label_confidence": 0.93,
}


def small_catalog_doc():
    """Three patterns with hand-checkable scores."""
    return {
        "threats": ["dos", "scan"],
        "capabilities": ["fw"],
        "sla_levels": ["normal"],
        "patterns": [
            {"id": "pA", "name": "A", "covered_threats": ["dos"], "required_capabilities": [],
             "cost": {"cpu": 10, "mem": 10, "lat": 5, "ene": 5}, "expected_evidence": ["burst"],
             "is_baseline": True},
            {"id": "pB", "name": "B", "covered_threats": ["dos"], "required_capabilities": ["fw"],
             "cost": {"cpu": 20, "mem": 10, "lat": 10, "ene": 10},
             "expected_evidence": ["burst", "syn"]},
            {"id": "pC", "name": "C", "covered_threats": ["scan"], "required_capabilities": [],
             "cost": {"cpu": 5, "mem": 5, "lat": 2, "ene": 2}, "expected_evidence": []},
        ],
        "conflicts": [["pB", "pC"]],
        "synergies": [["pA", "pB"]],
        "precedence": [],
    }


@pytest.fixture(scope="session")
def catalog():
    return load_catalog()


@pytest.fixture
def small_catalog():
    return load_catalog(small_catalog_doc())


@pytest.fixture
def small_context():
    return StructuredContext(
        threat="dos", severity=0.8, confidence=0.9,
        budgets=BudgetVector(100, 100, 50, 50), sla="normal",
        evidence=frozenset({"burst", "syn"}), capabilities=frozenset({"fw"}),
    )


@pytest.fixture
def appendix_x():
    return TelemetryVector.from_mapping(APPENDIX_DOS)


@pytest.fixture
def appendix_file(tmp_path):
    p = tmp_path / "dos.json"
    p.write_text(json.dumps(APPENDIX_DOS))
    return p


# --- acceptance report ------------------------------------------------------

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion."""
    def record(n, ok, detail):
        ACCEPTANCE_LINES[n] = f"AC{n} {'PASS' if ok else 'FAIL'}  {detail}"
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
