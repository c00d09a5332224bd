// SPDX-License-Identifier: Apache-2.0

use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};

use maat_core::audit::{read_log, score_session, OutcomeKind};
use maat_core::mediator::{Binding, MediationResult};
use maat_core::simnet::{run_scenario_file, ScenarioReport};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/scenarios").join(name)
}

fn run(name: &str) -> ScenarioReport {
    run_scenario_file(&fixture(name), None).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn only(report: &ScenarioReport) -> &MediationResult {
    assert_eq!(report.steps.len(), 1);
    &report.steps[0].result
}

fn bindings(r: &MediationResult) -> &[maat_core::mediator::ActionBinding] {
    match r {
        MediationResult::Reified { bindings, .. } => bindings,
        other => panic!("expected reified, got {other:?}"),
    }
}

#[test]
fn uc1_allocates_a_group_for_the_collaborators() {
    let report = run("uc1.scenario.json");
    let b = bindings(only(&report));
    match &b[0].binding {
        Binding::Candidate { node_id, matched, .. } => {
            assert_eq!(node_id, "bob");
            assert_eq!(matched, &["bob", "charlie"]);
        }
        other => panic!("{other:?}"),
    }
    match &b[1].binding {
        Binding::Group {
            address, ttl, members, ..
        } => {
            assert_eq!(*address, Some(Ipv4Addr::new(239, 0, 0, 1)));
            assert_eq!(*ttl, 32);
            assert_eq!(members, &["alice", "bob", "charlie"]);
        }
        other => panic!("{other:?}"),
    }
    let group = report.final_state.multicast.group(Ipv4Addr::new(239, 0, 0, 1)).unwrap();
    assert_eq!(group.ttl, 32);
}

#[test]
fn uc2_ladder() {
    let node = |name| match &bindings(only(&run(name)))[0].binding {
        Binding::Candidate { node_id, .. } => node_id.clone(),
        other => panic!("{other:?}"),
    };
    assert_eq!(node("uc2.scenario.json"), "hadoop-40");
    assert_eq!(node("uc2_70.scenario.json"), "hadoop-70");
    match only(&run("uc2_90.scenario.json")) {
        MediationResult::Failed { unsatisfied, .. } => {
            let names: Vec<String> = unsatisfied.iter().map(|c| c.to_string()).collect();
            assert_eq!(names, ["rtt<80ms"]);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn uc3_places_and_announces() {
    let report = run("uc3.scenario.json");
    let result = only(&report);
    let b = bindings(result);
    assert_eq!(b.len(), 3);
    assert_eq!(b[0].binding.node_id(), Some("cache-a"));
    assert!(matches!(&b[1].binding, Binding::Placement { node_id, announce: false, .. } if node_id == "cache-a"));
    assert!(matches!(&b[2].binding, Binding::Placement { content, announce: true, of: Some(of), .. }
        if content == "ABeautifulMind" && of == "831FD96B0.mp4"));
    let cache = report.final_state.topology.node("cache-a").unwrap().service("cache").unwrap();
    assert!(cache.content.contains("831FD96B0.mp4"));
    assert_eq!(report.final_state.content_holders("ABeautifulMind"), ["cache-a"]);
    let MediationResult::Reified { score, .. } = result else { unreachable!() };
    assert_eq!(*score, 1.0);
}

#[test]
fn escalation_outcomes() {
    let r = run("escalate.scenario.json");
    assert!(r.steps[0].result.is_reified());
    assert_eq!(r.steps[0].escalation_count, 1);
    assert_eq!(r.steps[0].agent_chain, ["lab-agent", "campus-agent"]);
    assert_eq!(bindings(&r.steps[0].result)[0].binding.node_id(), Some("dorm-hadoop"));
    assert!(r.steps[1].result.is_reified());
    assert_eq!(r.steps[1].escalation_count, 0);

    let r = run("escalate_no_parent.scenario.json");
    assert!(matches!(only(&r), MediationResult::NonIdnFallback { reason } if reason == "no wider scope"));
    assert_eq!(r.steps[0].completed_at, 2000);

    let r = run("escalate_parent_fails.scenario.json");
    assert!(matches!(only(&r), MediationResult::NonIdnFallback { .. }));
    assert_eq!(r.steps[0].escalation_count, 1);

    let r = run("escalate_parent_down.scenario.json");
    assert!(matches!(only(&r), MediationResult::NonIdnFallback { reason } if reason.contains("unreachable")));
    assert_eq!(r.steps[0].completed_at, 2000);

    let r = run("escalate_timeout.scenario.json");
    assert!(only(&r).is_reified());
    assert_eq!(r.steps[0].escalation_count, 1);
    assert_eq!(r.steps[0].completed_at, 2300);
}

#[test]
fn advertize_then_discover() {
    let r = run("advertize.scenario.json");
    let kinds: Vec<&str> = r.steps.iter().map(|s| s.result.kind()).collect();
    assert_eq!(kinds, ["failed", "reified", "reified", "rejected"]);
    assert_eq!(bindings(&r.steps[2].result)[0].binding.node_id(), Some("viewer"));
    assert_eq!(r.audit_records, 4);
    assert_eq!(r.sessions_closed, 4);
}

#[test]
fn audit_file_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    let ra = run_scenario_file(&fixture("advertize.scenario.json"), Some(&a)).unwrap();
    let rb = run_scenario_file(&fixture("advertize.scenario.json"), Some(&b)).unwrap();
    assert_eq!(ra.steps, rb.steps);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let records = read_log(&a).unwrap();
    assert_eq!(records.len(), 4);
    assert_eq!(records[3].outcome, OutcomeKind::Rejected);
    assert_eq!(score_session(&records[3]).unwrap().value, 0.0);
    let ts: Vec<u64> = records.iter().map(|r| r.logical_timestamp).collect();
    assert!(ts.windows(2).all(|w| w[0] < w[1]), "{ts:?}");
}
