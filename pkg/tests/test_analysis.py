from dataclasses import replace

import pytest

from services.analysis import (
    CHECKS,
    CONTINGENT,
    ENTAILED,
    FAIL,
    INCONCLUSIVE,
    PASS,
    Analyzer,
    analyze,
    combine,
)
from services.protocol import EvidenceSpec, ProtocolSpec, RunConfig


@pytest.fixture(scope="module")
def report(netbill):
    return analyze(netbill.spec, netbill.evidence)


@pytest.fixture(scope="module")
def fixed_report(netbill_fixed):
    return analyze(netbill_fixed.spec, netbill_fixed.evidence)


def test_combine_prefers_failure():
    assert combine([PASS, INCONCLUSIVE, FAIL]) == FAIL
    assert combine([PASS, INCONCLUSIVE]) == INCONCLUSIVE
    assert combine([]) == PASS


def test_netbill_statuses(report):
    assert report.diagnostics == []
    assert report.statuses() == {
        "sufficiency": PASS,
        "accountability": PASS,
        "fairness": FAIL,
        "timeliness": FAIL,
    }
    assert list(report.verdicts) == list(CHECKS)


def test_initial_sets_and_assumptions(report):
    assert set(report.initial_sets) == {"C", "M", "N"}
    assert "PRD" in report.initial_sets["C"]
    assert "Goods" in report.initial_sets["M"]
    assert [name for name, _ in report.assumptions] == ["T1", "T1", "T2", "T2"]
    assert report.notes


def test_sufficiency_records_constraints(report):
    verdict = report.verdicts["sufficiency"]
    assert [proof.evidence for proof in verdict.proofs] == ["EOO", "EOR"]
    assert all(proof.derivation is not None for proof in verdict.proofs)
    assert all(proof.constraints for proof in verdict.proofs)
    assert verdict.summary == "2/2 goals proved"


def test_accountability_finds_evidence_at_terminal_state(report):
    verdict = report.verdicts["accountability"]
    assert [(record.name, record.holder) for record in verdict.evidence] == [("EOO", "C"), ("EOR", "M")]
    assert all(record.derivable for record in verdict.evidence)
    for record in verdict.evidence:
        assert all(label is not None for label in record.first_derivable.values())


def test_waiting_conditions(report):
    conditions = {c.party: c for c in report.verdicts["timeliness"].conditions}
    customer, merchant = conditions["C"], conditions["M"]
    assert customer.condition == "T5 <= T7 and T7 <= T5 + tC"
    assert customer.bindings == ["Tx = T5", "Ty = T7 = T5 + t5 + t6"]
    assert customer.status == CONTINGENT
    assert merchant.status == ENTAILED
    assert (merchant.after_step, merchant.reply_step) == (6, 7)


def test_customer_condition_has_refuting_and_satisfying_models(report):
    customer = next(c for c in report.verdicts["timeliness"].conditions if c.party == "C")
    refuting, satisfying = customer.witnesses
    assert refuting.violates == "T7 <= T5 + tC"
    assert refuting.config == RunConfig(7, frozenset({"C"}))
    assert refuting.model["t5"] + refuting.model["t6"] > refuting.model["tC"]
    assert satisfying.violates == ""
    assert satisfying.model["t5"] + satisfying.model["t6"] <= satisfying.model["tC"]


def test_refuting_witness_comes_from_the_timed_out_run(report):
    customer = next(c for c in report.verdicts["timeliness"].conditions if c.party == "C")
    refuting = customer.witnesses[0]
    assert "T5 + tC < T7" in refuting.system
    assert not any("T8" in line for line in refuting.system)
    assert "T8" not in refuting.model


def test_witness_times_are_never_negative(report, fixed_report):
    witnesses = list(report.verdicts["fairness"].witnesses)
    for verdict in (report.verdicts["timeliness"], fixed_report.verdicts["fairness"]):
        witnesses.extend(w for c in verdict.conditions for w in c.witnesses)
    models = [w.model for w in witnesses]
    models.extend(v.model for v in report.verdicts["fairness"].violations)
    assert models
    for model in models:
        assert all(value >= 0 for value in model.values()), model


def test_fairness_fails_with_customer_timeout_witness(report):
    verdict = report.verdicts["fairness"]
    assert verdict.subchecks == {"exchange": FAIL, "timing": FAIL}
    configs = {record.config for record in verdict.violations}
    assert RunConfig(7, frozenset({"C"})) in configs
    assert RunConfig(7) in configs
    (witness,) = verdict.witnesses
    assert "C" in witness.config.timeout_fired
    assert witness.system


def test_violating_states_have_unequal_sides(report):
    for record in report.verdicts["fairness"].violations:
        assert set(record.sides) == {"C", "M"}
        assert record.sides["M"] and not record.sides["C"]


def test_fixed_netbill_meets_timeliness(fixed_report):
    assert fixed_report.statuses()["timeliness"] == PASS
    fairness = fixed_report.verdicts["fairness"]
    assert fairness.subchecks == {"exchange": FAIL, "timing": PASS}
    assert all("C" not in record.config.timeout_fired for record in fairness.violations)


def test_selected_checks_only(netbill):
    result = analyze(netbill.spec, netbill.evidence, checks=["accountability"])
    assert result.statuses() == {"accountability": PASS}


def test_invalid_spec_yields_diagnostics_not_exceptions():
    result = analyze(ProtocolSpec())
    assert [d.code for d in result.diagnostics] == ["E_EMPTY"]
    assert result.verdicts == {}


def test_fairness_without_evidence_is_vacuous(netbill):
    verdict = Analyzer(netbill.spec, EvidenceSpec()).check_fairness()
    assert verdict.status == PASS
    assert verdict.violations == []


def test_fairness_needs_waiting_times(netbill):
    spec = replace(netbill.spec, timeouts={})
    verdict = Analyzer(spec, netbill.evidence).check_fairness()
    assert verdict.status == INCONCLUSIVE
    assert [d.code for d in verdict.diagnostics] == ["E_NO_TIMEOUTS"]


def test_shallow_search_is_inconclusive(netbill):
    verdict = Analyzer(netbill.spec, netbill.evidence, depth_limit=1).check_sufficiency()
    assert verdict.status == INCONCLUSIVE
    assert "E_DEPTH" in [d.code for d in verdict.diagnostics]
