mod common;

use std::collections::BTreeMap;

use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use scdebug::checker::*;
use scdebug::dsl::{parse_domain_theory, parse_sc, parse_sd, parse_sd_with_theory};
use scdebug::model::{DomainTheory, RepairEdit};

fn fig10() -> (
    DomainTheory,
    scdebug::model::SequenceDiagram,
    scdebug::model::Statechart,
    scdebug::model::Statechart,
) {
    let dt = parse_domain_theory(&read_fixture("fig10/empty.dt")).unwrap();
    let sd = parse_sd_with_theory(&read_fixture("fig10/scenario.sd"), &dt).unwrap();
    let orig = parse_sc(&read_fixture("fig10/original.sc")).unwrap();
    let edited = parse_sc(&read_fixture("fig10/edited.sc")).unwrap();
    (dt, sd, orig, edited)
}

#[test]
fn repair_cost_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = CheckConfig::default();
    let mut checked = 0;
    while checked < 40 {
        let Some(case) = repair_case(&mut rng, 2) else { continue };
        let expected = brute_force_min_cost(&case.mutated, "Obj", &case.chart, &case.dt, 2);
        let got = repair(&case.mutated, "Obj", &case.chart, &case.dt, 2, &cfg);
        match (expected, &got) {
            (Some(cost), Ok(r)) => {
                assert_eq!(r.cost, cost, "{:?}", case.mutated);
                assert_eq!(r.edits.len(), cost);
                let mut s = case.mutated.clone();
                for e in &r.edits {
                    e.apply(&mut s);
                }
                assert_eq!(s, r.repaired_sd);
                assert!(replay(&s, "Obj", &case.chart, &case.dt, &cfg).accepted());
                assert!(conflict_free(&s, &case.dt));
            }
            (None, Err(_)) => {}
            other => panic!("oracle and repair disagree: {other:?}"),
        }
        checked += 1;
    }
}

#[test]
fn repair_is_monotone_in_the_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let cfg = CheckConfig::default();
    let mut checked = 0;
    while checked < 25 {
        let Some(case) = repair_case(&mut rng, 3) else { continue };
        let costs: Vec<Option<usize>> = (0..=3)
            .map(|b| {
                repair(&case.mutated, "Obj", &case.chart, &case.dt, b, &cfg)
                    .ok()
                    .map(|r| r.cost)
            })
            .collect();
        if let Some(first) = costs.iter().position(Option::is_some) {
            let c = costs[first].unwrap();
            assert_eq!(c, first);
            assert!(costs[first..].iter().all(|x| *x == Some(c)), "{costs:?}");
        }
        checked += 1;
    }
}

#[test]
fn fig10_repair_is_the_unique_single_insertion() {
    let (dt, sd, orig, edited) = fig10();
    let cfg = CheckConfig::default();
    assert!(replay(&sd, "Obj", &orig, &dt, &cfg).accepted());
    let r = repair(&sd, "Obj", &edited, &dt, DEFAULT_MAX_EDITS, &cfg).unwrap();
    assert_eq!(r.cost, 1);
    let fixes = all_single_edit_fixes(&sd, "Obj", &edited, &dt);
    assert_eq!(fixes, r.edits);
    match &r.edits[0] {
        RepairEdit::Insert { message, at } => {
            assert_eq!(*at, 2);
            assert_eq!(
                (
                    message.label.as_str(),
                    message.sender.as_str(),
                    message.receiver.as_str()
                ),
                ("e3", "Env", "Obj")
            );
        }
        e => panic!("{e:?}"),
    }
    let labels: Vec<&str> = r.repaired_sd.messages.iter().map(|m| m.label.as_str()).collect();
    assert_eq!(labels, ["e1", "e2", "e3", "a3", "e4"]);
}

#[test]
fn two_deletions_exceed_a_bound_of_one() {
    let dt = DomainTheory::default();
    let chart = parse_sc("state N1\nstate N2\ninitial N1\nN1 -> N2 : a\n").unwrap();
    let sd = parse_sd("sd S\nobjects Env, Obj\nmsg Env -> Obj : a\nmsg Env -> Obj : b\nmsg Env -> Obj : b\n").unwrap();
    let cfg = CheckConfig::default();
    let err = repair(&sd, "Obj", &chart, &dt, 1, &cfg).unwrap_err();
    assert_eq!(err.max_edits, 1);
    assert!(err.explored > 0);
    assert!(err.best.is_some());
    assert_eq!(brute_force_min_cost(&sd, "Obj", &chart, &dt, 1), None);
    let r = repair(&sd, "Obj", &chart, &dt, 2, &cfg).unwrap();
    assert_eq!(r.cost, 2);
    assert_eq!(brute_force_min_cost(&sd, "Obj", &chart, &dt, 2), Some(2));
}

#[test]
fn repair_respects_the_theory() {
    // Deleting the offending message is the only fix; inserting `b` would
    // satisfy the chart but clash with the theory.
    let dt = parse_domain_theory(
        "A : Boolean\ncontext a\n pre: A = F ;\n post: A = T ;\ncontext b\n pre: A = F ;\n post:\n",
    )
    .unwrap();
    let chart = parse_sc("state N1\nstate N2\nstate N3\ninitial N1\nN1 -> N2 : a\nN2 -> N3 : b\n").unwrap();
    let sd = parse_sd_with_theory("sd S\nobjects Env, Obj\nmsg Env -> Obj : a\n", &dt).unwrap();
    let cfg = CheckConfig::default();
    assert!(replay(&sd, "Obj", &chart, &dt, &cfg).accepted());
    let sd2 = parse_sd_with_theory(
        "sd S\nobjects Env, Obj\nmsg Env -> Obj : b\nmsg Env -> Obj : a\nmsg Env -> Obj : b\n",
        &dt,
    )
    .unwrap();
    let r = repair(&sd2, "Obj", &chart, &dt, 3, &cfg).unwrap();
    assert!(r.annotation_ok);
    assert!(conflict_free(&r.repaired_sd, &dt));
    assert_eq!(Some(r.cost), brute_force_min_cost(&sd2, "Obj", &chart, &dt, 3));
}

#[test]
fn check_all_covers_every_object_with_a_chart() {
    let dt = parse_domain_theory(&read_fixture("coffee.dt")).unwrap();
    let sds: Vec<_> = ["sd1.sd", "sd2.sd"]
        .iter()
        .map(|f| parse_sd_with_theory(&read_fixture(f), &dt).unwrap())
        .collect();
    let synth = scdebug::synthesizer::synthesize(&dt, &sds, &Default::default()).unwrap();
    let charts: BTreeMap<_, _> = synth.into_iter().map(|(k, v)| (k, v.chart)).collect();
    let results = check_all(&dt, &charts, &sds, DEFAULT_MAX_EDITS, &CheckConfig::default());
    assert_eq!(results.len(), 6);
    assert!(results.iter().all(|r| r.trace.accepted() && r.repair.is_none()));

    let mut only_ui = charts.clone();
    only_ui.retain(|k, _| k == "Coffee-UI");
    let results = check_all(&dt, &only_ui, &sds, DEFAULT_MAX_EDITS, &CheckConfig::default());
    assert_eq!(results.len(), 2);
}
