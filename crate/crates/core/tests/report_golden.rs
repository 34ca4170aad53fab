mod common;

use common::*;
use serde_json::Value as Json;

use scdebug::cli;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = cli::run(
        std::iter::once("scdebug").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn f(rel: &str) -> String {
    fixture(rel).to_string_lossy().into_owned()
}

// ---------------------------------------------------------------------------
// A validator for the subset of JSON Schema used by docs/report.schema.json
// ---------------------------------------------------------------------------

fn resolve<'a>(root: &'a Json, schema: &'a Json) -> &'a Json {
    match schema.get("$ref").and_then(Json::as_str) {
        Some(r) => {
            let name = r.strip_prefix("#/$defs/").expect("local refs only");
            &root["$defs"][name]
        }
        None => schema,
    }
}

fn type_ok(ty: &str, v: &Json) -> bool {
    match ty {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "integer" => v.is_i64() || v.is_u64(),
        "null" => v.is_null(),
        "boolean" => v.is_boolean(),
        other => panic!("unsupported type {other}"),
    }
}

fn validate(root: &Json, schema: &Json, v: &Json, path: &str) -> Result<(), String> {
    let s = resolve(root, schema);
    let fail = |what: &str| Err(format!("{path}: {what}"));
    if let Some(ty) = s.get("type").and_then(Json::as_str) {
        if !type_ok(ty, v) {
            return fail(&format!("expected {ty}"));
        }
    }
    if let Some(c) = s.get("const") {
        if c != v {
            return fail(&format!("expected {c}"));
        }
    }
    if let Some(e) = s.get("enum").and_then(Json::as_array) {
        if !e.contains(v) {
            return fail("not in enum");
        }
    }
    if let Some(min) = s.get("minimum").and_then(Json::as_i64) {
        if v.as_i64().is_some_and(|n| n < min) {
            return fail("below minimum");
        }
    }
    if let Some(p) = s.get("pattern").and_then(Json::as_str) {
        // only `^PREFIX.*SUFFIX$` patterns occur
        let inner = p.strip_prefix('^').and_then(|x| x.strip_suffix('$')).unwrap();
        let (pre, suf) = inner.split_once(".*").unwrap();
        let text = v.as_str().unwrap_or_default();
        if !(text.starts_with(pre) && text.ends_with(suf)) {
            return fail("pattern mismatch");
        }
    }
    if let Some(alts) = s.get("oneOf").and_then(Json::as_array) {
        let n = alts.iter().filter(|a| validate(root, a, v, path).is_ok()).count();
        if n != 1 {
            return fail(&format!("{n} oneOf branches match"));
        }
    }
    if let Some(obj) = v.as_object() {
        let props = s.get("properties").and_then(Json::as_object);
        for r in s.get("required").and_then(Json::as_array).into_iter().flatten() {
            if !obj.contains_key(r.as_str().unwrap()) {
                return fail(&format!("missing {r}"));
            }
        }
        for (k, x) in obj {
            match props.and_then(|p| p.get(k)) {
                Some(sub) => validate(root, sub, x, &format!("{path}.{k}"))?,
                None if s.get("additionalProperties") == Some(&Json::Bool(false)) => {
                    return fail(&format!("unexpected key {k}"))
                }
                None => {}
            }
        }
    }
    if let Some(items) = v.as_array() {
        if let Some(n) = s.get("minItems").and_then(Json::as_u64) {
            if (items.len() as u64) < n {
                return fail("too few items");
            }
        }
        if let Some(n) = s.get("maxItems").and_then(Json::as_u64) {
            if (items.len() as u64) > n {
                return fail("too many items");
            }
        }
        if let Some(sub) = s.get("items") {
            for (i, x) in items.iter().enumerate() {
                validate(root, sub, x, &format!("{path}[{i}]"))?;
            }
        }
    }
    Ok(())
}

fn schema() -> Json {
    let text = std::fs::read_to_string(fixture("../docs/report.schema.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn json_reports_match_the_schema() {
    let schema = schema();
    let runs: Vec<Vec<String>> = vec![
        vec![
            "annotate".into(),
            "--theory".into(),
            f("coffee_prefix.dt"),
            f("sd1.sd"),
            f("sd2.sd"),
        ],
        vec!["annotate".into(), "--theory".into(), f("coffee.dt"), f("sd1.sd")],
        vec![
            "check".into(),
            "--theory".into(),
            f("fig10/empty.dt"),
            f("fig10/scenario.sd"),
            "--chart".into(),
            f("fig10/edited.sc"),
        ],
        vec![
            "check".into(),
            "--theory".into(),
            f("fig10/empty.dt"),
            f("fig10/scenario.sd"),
            "--chart".into(),
            f("fig10/edited.sc"),
            "--max-edits".into(),
            "0".into(),
        ],
        vec![
            "check".into(),
            "--theory".into(),
            f("fig10/empty.dt"),
            f("fig10/scenario.sd"),
            "--chart".into(),
            f("fig10/original.sc"),
        ],
    ];
    for mut args in runs {
        args.push("--json".into());
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let (_, out, err) = run(&refs);
        assert!(err.is_empty(), "{err}");
        let v: Json = serde_json::from_str(&out).unwrap();
        validate(&schema, &schema, &v, "$").unwrap_or_else(|e| panic!("{e}\n{out}"));
    }
}

#[test]
fn validator_rejects_malformed_reports() {
    let schema = schema();
    let (_, out, _) = run(&["annotate", "--theory", &f("coffee_prefix.dt"), &f("sd1.sd"), "--json"]);
    let good: Json = serde_json::from_str(&out).unwrap();
    let mut bad = good.clone();
    bad["conflicts"][0]["derivation"][0]["via"] = Json::from("guess");
    assert!(validate(&schema, &schema, &bad, "$").is_err());
    let mut bad = good.clone();
    bad.as_object_mut().unwrap().remove("summary");
    assert!(validate(&schema, &schema, &bad, "$").is_err());
    let mut bad = good;
    bad["extra"] = Json::Null;
    assert!(validate(&schema, &schema, &bad, "$").is_err());
}

#[test]
fn conflict_report_matches_golden() {
    let (code, out, _) = run(&["annotate", "--theory", &f("coffee_prefix.dt"), &f("sd1.sd")]);
    assert_eq!(code, 1);
    assert_eq!(out, read_fixture("golden/sd1_conflict.txt"));
    let (_, out, _) = run(&["annotate", "--theory", &f("coffee_prefix.dt"), &f("sd1.sd"), "--json"]);
    assert_eq!(out, read_fixture("golden/sd1_conflict.json"));
}

#[test]
fn synthesized_charts_match_golden() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_string_lossy().into_owned();
    let (code, _, err) = run(&[
        "synth",
        "--theory",
        &f("coffee.dt"),
        &f("sd1.sd"),
        &f("sd2.sd"),
        "-o",
        &d,
        "--dot",
        &d,
    ]);
    assert_eq!(code, 0, "{err}");
    for object in ["Coffee-UI", "Control", "User"] {
        for ext in ["sc", "dot"] {
            let name = format!("{object}.{ext}");
            let got = std::fs::read_to_string(dir.path().join(&name)).unwrap();
            assert_eq!(got, read_fixture(&format!("golden/{name}")), "{name}");
        }
    }
}

#[test]
fn fig10_repair_matches_golden() {
    let (code, out, _) = run(&[
        "check",
        "--theory",
        &f("fig10/empty.dt"),
        &f("fig10/scenario.sd"),
        "--chart",
        &f("fig10/edited.sc"),
    ]);
    assert_eq!(code, 1);
    assert_eq!(out, read_fixture("golden/fig10_check.txt"));
}

#[test]
fn dot_export_has_clusters_for_composites() {
    let dot = read_fixture("golden/Coffee-UI.dot");
    assert!(dot.starts_with("digraph"));
    assert!(dot.contains("compound=true"));
    assert!(dot.contains("subgraph cluster_C1 {"), "{dot}");
    assert!(dot.contains("lhead=") || dot.contains("ltail="));
}
