mod common;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scdebug::annotator::{annotate, AnnotationConfig};
use scdebug::checker::{replay, CheckConfig};
use scdebug::dsl::{parse_domain_theory, parse_sd_with_theory};
use scdebug::model::{Node, StateVector};
use scdebug::synthesizer::*;

fn random_flat(rng: &mut ChaCha8Rng) -> FlatChart {
    let n = rng.gen_range(1..=8);
    let labels = ["a", "b", "c"];
    let mut c = FlatChart {
        states: vec![StateVector::unknown(0); n],
        initial: 0,
        transitions: Vec::new(),
    };
    for _ in 0..rng.gen_range(0..=12) {
        let t = FlatTransition {
            from: rng.gen_range(0..n),
            to: rng.gen_range(0..n),
            event: Some(labels[rng.gen_range(0..3)].to_string()),
            actions: Vec::new(),
        };
        if !c.transitions.contains(&t) {
            c.transitions.push(t);
        }
    }
    c
}

fn coffee_flats() -> std::collections::BTreeMap<String, Vec<FlatChart>> {
    let dt = parse_domain_theory(&read_fixture("coffee.dt")).unwrap();
    let mut out: std::collections::BTreeMap<String, Vec<FlatChart>> = Default::default();
    for f in ["sd1.sd", "sd2.sd"] {
        let sd = parse_sd_with_theory(&read_fixture(f), &dt).unwrap();
        let a = annotate(&sd, &dt, &AnnotationConfig::default()).unwrap();
        for o in &sd.objects {
            out.entry(o.clone())
                .or_default()
                .push(synth_object_chart(&a.asd, o, &a.conflicts).unwrap());
        }
    }
    out
}

proptest! {
    #[test]
    fn hierarchy_flattens_back_to_the_input(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flat = random_flat(&mut rng);
        let h = introduce_hierarchy(&flat, "Obj");
        let back = h.flatten();
        let plain = flat.to_statechart("Obj");
        prop_assert!(same_graph(&back, &plain));
        prop_assert!(isomorphic(&back, &plain));
    }

    #[test]
    fn merge_with_itself_is_identity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nvars = rng.gen_range(1..=3);
        let dt = random_theory(&mut rng, nvars, &["a", "b"], 1);
        let len = rng.gen_range(1..=8);
        let sd = random_sd(&mut rng, &["X", "Y"], &["a", "b", "c"], len);
        let a = annotate(&sd, &dt, &AnnotationConfig::default()).unwrap();
        prop_assume!(a.conflicts.is_empty());
        let c = synth_object_chart(&a.asd, "X", &a.conflicts).unwrap();
        prop_assert_eq!(merge_charts(std::slice::from_ref(&c)), c.clone());
        prop_assert_eq!(merge_charts(&[c.clone(), c.clone()]), c.clone());
        prop_assert_eq!(merge_charts(&[FlatChart::empty(), c.clone()]), c.clone());
        prop_assert_eq!(merge_charts(&[c.clone(), FlatChart::empty()]), c);
    }

    #[test]
    fn diagrams_replay_on_their_own_charts(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nvars = rng.gen_range(1..=3);
        let dt = random_theory(&mut rng, nvars, &["a", "b"], 2);
        let len = rng.gen_range(1..=8);
        let sd = random_sd(&mut rng, &["X", "Y", "Z"], &["a", "b", "c"], len);
        prop_assume!(conflict_free(&sd, &dt));
        let charts = synthesize(&dt, std::slice::from_ref(&sd), &AnnotationConfig::default()).unwrap();
        for (o, c) in &charts {
            prop_assert!(replay(&sd, o, &c.chart, &dt, &CheckConfig::default()).accepted());
        }
    }
}

#[test]
fn coffee_merge_is_order_insensitive_up_to_renaming() {
    for (object, flats) in coffee_flats() {
        let ab = merge_charts(&flats).to_statechart(&object);
        let ba = merge_charts(&[flats[1].clone(), flats[0].clone()]).to_statechart(&object);
        assert!(isomorphic(&ab, &ba), "{object}");
    }
}

#[test]
fn coffee_charts_have_the_expected_shape() {
    let flats = coffee_flats();
    let ui = merge_charts(&flats["Coffee-UI"]);
    // the UI returns to its ready state after each scenario
    let ready = ui.initial;
    assert!(ui
        .transitions
        .iter()
        .any(|t| t.to == ready && t.actions == ["Display Ready Light"]));
    let chart = introduce_hierarchy(&ui, "Coffee-UI");
    assert!(isomorphic(&chart.flatten(), &ui.to_statechart("Coffee-UI")));
    assert!(chart
        .nodes
        .iter()
        .all(|n| matches!(n, Node::Simple(_) | Node::Composite(..))));
}

#[test]
fn synthesis_refuses_conflicting_input() {
    let (dt, sd) = coffee("coffee_prefix.dt");
    match synthesize(&dt, &[sd], &AnnotationConfig::default()) {
        Err(SynthError::Conflicts(cs)) => assert_eq!(cs.len(), 1),
        other => panic!("{other:?}"),
    }
}
