"""Scenario engine: config handling, determinism, the shipped scenario
corpus, and the standalone attack experiments.

The per-scenario numbers pinned here are regression anchors: they were
observed on the first verified-clean runs and must stay byte-stable because
every source of randomness derives from the scenario seed.
"""

import math
import random
from pathlib import Path

import pytest

from agentchain.reputation import is_blacklisted
from agentchain.sim import (
    AttackKind,
    ConfigError,
    ScenarioAssertion,
    ScenarioConfig,
    Simulation,
    audit_access_log,
    config_from_dict,
    expected_double_spend_rate,
    export_all_chains,
    load_scenario,
    run_double_spend_experiment,
    run_experiment,
    run_forged_token_experiment,
    run_scenario,
    run_tamper_experiment,
)

SCENARIO_DIR = Path(__file__).parent.parent / "scenarios"
SCENARIO_FILES = sorted(SCENARIO_DIR.glob("*.json"))


def _cfg(**kw) -> ScenarioConfig:
    base = dict(name="unit", seed=5, n_agents=8, ticks=4)
    base.update(kw)
    return ScenarioConfig(**base)


# --- configuration -----------------------------------------------------------

@pytest.mark.parametrize(
    "bad",
    [
        dict(n_agents=3, redundancy=4),
        dict(ticks=0),
        dict(churn=1.0),
        dict(churn=-0.1),
        dict(fanout=0),
        dict(redundancy=0),
        dict(n_agents=0),
    ],
)
def test_config_rejects_impossible_shapes(bad):
    with pytest.raises(ConfigError):
        _cfg(**bad)


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError) as err:
        config_from_dict({"name": "x", "banana": 1})
    assert "banana" in str(err.value)


def test_load_scenario_errors(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigError):
        load_scenario(str(broken))
    listy = tmp_path / "list.json"
    listy.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_scenario(str(listy))
    with pytest.raises(FileNotFoundError):
        load_scenario(str(tmp_path / "absent.json"))


def test_script_ops_are_checked():
    with pytest.raises(ConfigError):
        Simulation(_cfg(script=({"op": "report", "agent": 0},)))  # no tick
    with pytest.raises(ConfigError):
        Simulation(_cfg(script=({"tick": 1, "op": "levitate"},))).run()
    with pytest.raises(ConfigError):
        Simulation(_cfg(script=({"tick": 1, "op": "report", "agent": 99},))).run()
    unfilled = ({"tick": 1, "op": "access", "patient": 0, "requester": 1, "token": "$nope"},)
    with pytest.raises(ConfigError):
        Simulation(_cfg(script=unfilled)).run()


def test_expectation_mismatch_fails_the_run():
    script = (
        {
            "tick": 1,
            "op": "access",
            "patient": 0,
            "requester": 1,
            "token": "00" * 32,
            "expect": "granted",
        },
    )
    with pytest.raises(ScenarioAssertion) as err:
        Simulation(_cfg(script=script)).run()
    assert "denied:unknown_token" in str(err.value)


# --- the engine itself ---------------------------------------------------------

def test_empty_script_runs_clean():
    result = Simulation(_cfg(ticks=6)).run()
    assert len(result.metrics_log.rows) == 6
    assert result.access_log == []
    summary = result.summary()
    assert summary["conservation_intact"]
    assert summary["attacks"] == {"attempted": 0, "detected": 0, "missed": 0}
    assert audit_access_log(result) == []


def test_same_seed_same_bytes_different_seed_different_bytes():
    cfg = _cfg(
        ticks=8,
        seed_fuel=10,
        script=(
            {"tick": 1, "op": "vitals", "patient": 0, "share": True},
            {"tick": 2, "op": "transfer", "sender": 0, "receiver": 3, "amount": 4},
            {"tick": 3, "op": "report", "agent": 2},
        ),
    )
    a = Simulation(cfg).run()
    b = Simulation(cfg).run()
    assert a.metrics_log.to_csv() == b.metrics_log.to_csv()
    assert export_all_chains(a) == export_all_chains(b)

    import dataclasses

    c = Simulation(dataclasses.replace(cfg, seed=cfg.seed + 1)).run()
    assert export_all_chains(a) != export_all_chains(c)


# --- shipped scenario corpus ------------------------------------------------------

def test_scenario_corpus_is_present():
    names = {p.stem for p in SCENARIO_FILES}
    assert names == {
        "churn_availability",
        "dos_flood",
        "fork_probe",
        "fuel_roundtrip",
        "holder_serve",
        "mitm_wire",
        "patient_doctor",
        "tamper_blacklist",
    }


# observed on the first clean runs; deterministic thereafter
CORPUS_ANCHORS = {
    "churn_availability": dict(attempted=0, granted=0, denied=0, availability=(118, 118)),
    "dos_flood": dict(attempted=4, blacklist_events=9),
    "fork_probe": dict(attempted=2),
    "fuel_roundtrip": dict(attempted=2),
    "holder_serve": dict(attempted=0, granted=2, denied=1),
    "mitm_wire": dict(attempted=3),
    "patient_doctor": dict(attempted=301, granted=1, denied=4),
    "tamper_blacklist": dict(attempted=3, blacklist_events=11),
}


@pytest.mark.parametrize("path", SCENARIO_FILES, ids=lambda p: p.stem)
def test_scenario_runs_clean(path):
    result = run_scenario(load_scenario(str(path)))
    m = result.metrics
    assert m.conservation_violations == 0
    assert m.attacks_missed == 0
    assert m.attacks_detected == m.attacks_attempted
    assert result.availability_hits == result.availability_slots
    assert audit_access_log(result) == []

    anchor = CORPUS_ANCHORS[path.stem]
    assert m.attacks_attempted == anchor["attempted"]
    summary = result.summary()
    if "granted" in anchor:
        assert summary["access"]["granted"] == anchor["granted"]
        assert summary["access"]["denied"] == anchor["denied"]
    if "blacklist_events" in anchor:
        assert m.blacklist_events == anchor["blacklist_events"]
    if "availability" in anchor:
        assert (result.availability_hits, result.availability_slots) == anchor["availability"]


def test_tampering_agent_ends_up_shunned_everywhere():
    result = run_scenario(load_scenario(str(SCENARIO_DIR / "tamper_blacklist.json")))
    offender = result.network.agents[5]
    peers = [a for a in result.network.agents if a is not offender]
    assert all(is_blacklisted(a.experience, offender.public_key) for a in peers)
    # one transition per honest peer, counted exactly once
    assert result.metrics.blacklist_events == len(peers)


# --- standalone experiments ---------------------------------------------------

def test_expected_double_spend_rate_oracle():
    # frozen from an independent hypergeometric computation
    assert expected_double_spend_rate(50, 8, 8) == 0.7881310595713096
    assert expected_double_spend_rate(50, 49, 8) == 1.0
    assert expected_double_spend_rate(50, 8, 0) == 0.0
    assert expected_double_spend_rate(10, 9, 1) == 1.0
    more_witnesses = [expected_double_spend_rate(30, g, 6) for g in (2, 6, 12, 20)]
    assert more_witnesses == sorted(more_witnesses)
    more_samples = [expected_double_spend_rate(30, 6, k) for k in (1, 4, 8, 16)]
    assert more_samples == sorted(more_samples)


def test_double_spend_experiment_accounting():
    out = run_double_spend_experiment(seed=3, trials=60, n_agents=20, witnesses=6, audit_samples=6)
    assert out["attempted"] == 60
    assert out["detected"] + out["missed"] == 60
    assert out["expected_rate"] == expected_double_spend_rate(20, 6, 6)
    # loose envelope; the acceptance suite holds the tight one
    assert abs(out["rate"] - out["expected_rate"]) < 0.2


def test_double_spend_certain_with_full_witness_coverage():
    out = run_double_spend_experiment(seed=3, trials=25, n_agents=12, witnesses=11, audit_samples=2)
    assert out["rate"] == 1.0


def test_tamper_experiment_catches_every_edit():
    out = run_tamper_experiment(seed=9, rounds=1)
    assert out["attempted"] > 0
    assert out["missed"] == 0
    assert out["detected"] == out["attempted"]


def test_forged_token_experiment_never_leaks():
    out = run_forged_token_experiment(seed=9, probes=500)
    assert out == {"attempted": 500, "detected": 500, "missed": 0}


@pytest.mark.parametrize(
    "kind",
    [AttackKind.MITM_MUTATION, AttackKind.DNA_FORK, AttackKind.DOS_FLOOD, AttackKind.UNAUTHORIZED_ACCESS],
)
def test_canned_attack_experiments(kind):
    out = run_experiment(kind, seed=17, trials=2)
    assert out["attempted"] >= 2
    assert out["missed"] == 0
    assert out["detected"] == out["attempted"]
