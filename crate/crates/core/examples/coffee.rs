//! Annotate the coffee-machine scenario against the unfixed theory, then
//! synthesize charts from the fixed one.
//!
//! cargo run -p scdebug-core --example coffee

use scdebug::annotator::{annotate, AnnotationConfig};
use scdebug::dsl::{parse_domain_theory, parse_sd_with_theory, print_sc};
use scdebug::report::{render_text, ReportBundle};
use scdebug::synthesizer::synthesize;

fn fixture(name: &str) -> String {
    let path = format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

fn main() {
    let unfixed = parse_domain_theory(&fixture("coffee_prefix.dt")).unwrap();
    let sd1 = parse_sd_with_theory(&fixture("sd1.sd"), &unfixed).unwrap();
    let a = annotate(&sd1, &unfixed, &AnnotationConfig::default()).unwrap();
    print!(
        "{}",
        render_text(&ReportBundle {
            conflicts: a.conflicts,
            ..Default::default()
        })
    );

    let fixed = parse_domain_theory(&fixture("coffee.dt")).unwrap();
    let sds: Vec<_> = ["sd1.sd", "sd2.sd"]
        .iter()
        .map(|f| parse_sd_with_theory(&fixture(f), &fixed).unwrap())
        .collect();
    for c in synthesize(&fixed, &sds, &AnnotationConfig::default()).unwrap().values() {
        println!();
        print!("{}", print_sc(&c.chart));
    }
}
