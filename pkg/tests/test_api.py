import json

import pytest

from api import SCHEMA, ReportDocument, build_report, parse_report_json, render_report
from services.analysis import analyze
from services.protocol import ProtocolSpec


@pytest.fixture(scope="module")
def document(netbill):
    return build_report(analyze(netbill.spec, netbill.evidence))


def test_json_report_shape(document):
    data = json.loads(render_report(document))
    assert data["meta"]["schema_version"] == SCHEMA
    assert data["meta"]["protocol"] == "NetBill"
    assert data["meta"]["checks"] == ["sufficiency", "accountability", "fairness", "timeliness"]
    assert data["validation"] == {"ok": True, "diagnostics": []}
    assert data["fairness"]["status"] == "FAIL"
    witness = data["fairness"]["witnesses"][0]
    assert "C" in witness["timeout_fired"]
    assert all(isinstance(value, str) for value in witness["model"].values())


def test_proof_tree_is_serialized(document):
    eoo = document.sufficiency.proofs[0]
    assert eoo.derivation.rule == "A4"
    assert eoo.derivation.notation.startswith("C ≻ M → Goods")
    assert [child.rule for child in eoo.derivation.children] == ["T2", "T1"]


def test_json_round_trip_is_a_fixpoint(document):
    first = render_report(document)
    again = parse_report_json(first)
    assert again.model_dump() == document.model_dump()
    assert render_report(again) == first


def test_text_report(document):
    text = render_report(document, "text").decode("utf-8")
    assert text.startswith(f"protocol NetBill ({SCHEMA})")
    assert "C ≻ pubkey pk(N) of N" in text
    assert "fairness: FAIL" in text
    assert "Ty = T7 = T5 + t5 + t6" in text


def test_invalid_protocol_report():
    doc = build_report(analyze(ProtocolSpec()))
    assert not doc.validation.ok
    assert doc.verdicts() == {}
    assert json.loads(render_report(doc))["validation"]["diagnostics"][0]["code"] == "E_EMPTY"


def test_empty_document_renders():
    doc = ReportDocument()
    assert render_report(doc, "text").decode("utf-8").startswith("protocol  (")
    assert parse_report_json(render_report(doc)).model_dump() == doc.model_dump()


def test_unknown_format():
    with pytest.raises(ValueError):
        render_report(ReportDocument(), "yaml")
