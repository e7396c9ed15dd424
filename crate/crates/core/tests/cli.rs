//! The `autorecipe` binary: subcommands, exit codes, and file outputs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_autorecipe")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn plan_writes_an_eleven_step_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let tax = fixture("taxonomies/asset_health.yaml");
    let out = run(&["plan", "--taxonomy", s(&tax), "--kpi", "asset health", "--target", "component quality", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let seq = autorecipe::plan_generator::PromptSequence::from_yaml(&std::fs::read_to_string(dir.path().join("plan.yaml")).unwrap()).unwrap();
    assert_eq!(seq.len(), 11);
}

#[test]
fn plan_with_model_planner_replays_a_ten_step_response() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("script.yaml");
    let reply = autorecipe::fixtures::PLAN_RESPONSE_ENVIRONMENTAL;
    std::fs::write(&script, serde_yaml::to_string(&serde_yaml::Mapping::from_iter([(
        "replies".into(),
        serde_yaml::Value::Sequence(vec![reply.into()]),
    )]))
    .unwrap())
    .unwrap();
    let out = run(&[
        "plan",
        "--taxonomy",
        s(&fixture("taxonomies/asset_sustainability.yaml")),
        "--taxonomy",
        s(&fixture("taxonomies/asset_health.yaml")),
        "--kpi",
        "asset sustainability",
        "--target",
        "environmental impact",
        "--planner",
        "model",
        "--script",
        s(&script),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("10 steps"));
}

#[test]
fn cyclic_taxonomy_exits_with_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let tax = dir.path().join("cyclic.yaml");
    std::fs::write(&tax, "name: loop\nkpi: a\nedges:\n  - {parent: a, relation: r, child: b}\n  - {parent: b, relation: r, child: a}\n").unwrap();
    let out = run(&["plan", "--taxonomy", s(&tax), "--kpi", "a", "--target", "a", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cycle detected"));
}

fn generate_args<'a>(script: &'a str, out: &'a str, tax: &'a str, search: &'a str, nli: &'a str) -> Vec<&'a str> {
    vec![
        "generate",
        "--taxonomy",
        tax,
        "--kpi",
        "asset health",
        "--target",
        "component quality",
        "--asset-class",
        "Industrial Furnace",
        "--script",
        script,
        "--search-fixture",
        search,
        "--nli-fixture",
        nli,
        "--seed",
        "7",
        "--out",
        out,
    ]
}

#[test]
fn generate_from_script_matches_the_replay_bundle() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (tax, search, nli) = (fixture("taxonomies/asset_health.yaml"), fixture("furnace/search.yaml"), fixture("furnace/nli.yaml"));
    let script = fixture("furnace/script.yaml");
    let out = run(&generate_args(s(&script), s(a.path()), s(&tax), s(&search), s(&nli)));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let mut args = generate_args(s(&script), s(b.path()), s(&tax), s(&search), s(&nli));
    let replay = fixture("furnace/replay.jsonl");
    let i = args.iter().position(|x| *x == "--script").unwrap();
    args[i] = "--replay";
    args[i + 1] = s(&replay);
    let again = run(&args);
    assert_eq!(again.status.code(), Some(0), "{}", String::from_utf8_lossy(&again.stderr));
    assert_eq!(out.stdout, again.stdout, "artifact hashes differ between script and replay");

    let knowledge = std::fs::read_to_string(a.path().join("recipe/knowledge.md")).unwrap();
    assert_eq!(knowledge.matches("References:").count(), 3);
    assert!(a.path().join("logs/transcript.jsonl").exists());
    assert!(a.path().join("scores.csv").exists());
}

#[test]
fn generate_names_the_stage_when_the_script_runs_dry() {
    let dir = tempfile::tempdir().unwrap();
    let full: serde_yaml::Value = serde_yaml::from_str(&std::fs::read_to_string(fixture("furnace/script.yaml")).unwrap()).unwrap();
    let mut replies = full["replies"].as_sequence().unwrap().clone();
    replies.pop();
    let short = dir.path().join("short.yaml");
    std::fs::write(&short, serde_yaml::to_string(&serde_yaml::Mapping::from_iter([("replies".into(), replies.into())])).unwrap()).unwrap();
    let (tax, search, nli) = (fixture("taxonomies/asset_health.yaml"), fixture("furnace/search.yaml"), fixture("furnace/nli.yaml"));
    let out_dir = dir.path().join("out");
    let out = run(&generate_args(s(&short), s(&out_dir), s(&tax), s(&search), s(&nli)));
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[configs]"));
    assert!(std::fs::read_to_string(out_dir.join("logs/pipeline.log")).unwrap().contains("error: [configs]"));
}

#[test]
fn score_prints_bounded_scores_and_rejects_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = autorecipe::recipe_store::HealthIndicatorConfig::from_yaml(
        &std::fs::read_to_string(fixture("configs/health_indicators.yaml")).unwrap(),
    )
    .unwrap();
    let data = dir.path().join("data.csv");
    std::fs::write(&data, autorecipe::recipe_store::generate_synthetic(&cfg, 5, 1).unwrap().to_csv()).unwrap();
    let ind = fixture("configs/health_indicators.yaml");

    let out = run(&["score", "--indicators", s(&ind), "--aggregation", s(&fixture("configs/aggregation_weighted.yaml")), "--dataset", s(&data)]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let scores: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(scores.len(), 5);
    assert!(scores.iter().all(|x| (0.0..=100.0).contains(x)));

    let ones = dir.path().join("ones.yaml");
    std::fs::write(
        &ones,
        "method:\n  kind: ahp\n  criteria: [shell_temperature, flue_gas_oxygen, burner_pressure]\n  pairwise: [[1,1,1],[1,1,1],[1,1,1]]\n",
    )
    .unwrap();
    let equal = dir.path().join("equal.yaml");
    std::fs::write(
        &equal,
        "method:\n  kind: weighted\n  weights: {shell_temperature: 0.25, flue_gas_oxygen: 0.25, burner_pressure: 0.5}\n",
    )
    .unwrap();
    let a = run(&["score", "--indicators", s(&ind), "--aggregation", s(&ones), "--dataset", s(&data)]);
    let b = run(&["score", "--indicators", s(&ind), "--aggregation", s(&equal), "--dataset", s(&data)]);
    assert_ne!(a.stdout, b.stdout);
    let third = 1.0 / 3.0;
    std::fs::write(
        &equal,
        format!("method:\n  kind: weighted\n  weights: {{shell_temperature: {third}, flue_gas_oxygen: {third}, burner_pressure: {third}}}\n"),
    )
    .unwrap();
    let b = run(&["score", "--indicators", s(&ind), "--aggregation", s(&equal), "--dataset", s(&data)]);
    let strip = |o: &Output| String::from_utf8_lossy(&o.stdout).lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect::<Vec<_>>();
    assert_eq!(strip(&a), strip(&b));

    let bad = run(&["score", "--indicators", s(&ind), "--aggregation", s(&fixture("configs/aggregation_malformed.yaml")), "--dataset", s(&data)]);
    assert_eq!(bad.status.code(), Some(2));
    let err = String::from_utf8_lossy(&bad.stderr);
    assert!(err.contains("unknown sensor: vibration"), "{err}");
    assert!(err.contains("weights sum to"), "{err}");
}

#[test]
fn metrics_table_and_empty_document() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.md");
    let empty = dir.path().join("empty.md");
    std::fs::write(&a, "a b c d").unwrap();
    std::fs::write(&empty, "  ").unwrap();
    let out = run(&["metrics", s(&a), s(&a)]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("document,tokens,ttr,coverage,similarity"));
    assert!(text.lines().nth(2).unwrap().ends_with(",4,2.0,100.0,1.0"), "{text}");
    assert_eq!(run(&["metrics", s(&empty)]).status.code(), Some(2));
}

#[test]
fn verify_refs_cites_a_document() {
    let dir = tempfile::tempdir().unwrap();
    let full: serde_yaml::Value = serde_yaml::from_str(&std::fs::read_to_string(fixture("furnace/script.yaml")).unwrap()).unwrap();
    let r = &full["replies"];
    let doc = dir.path().join("doc.md");
    std::fs::write(&doc, r[3].as_str().unwrap()).unwrap();
    let script = dir.path().join("claims.yaml");
    let claims: Vec<serde_yaml::Value> = (4..7).map(|i| r[i].clone()).collect();
    std::fs::write(&script, serde_yaml::to_string(&serde_yaml::Mapping::from_iter([("replies".into(), claims.into())])).unwrap()).unwrap();
    let out = run(&[
        "verify-refs",
        "--document",
        s(&doc),
        "--script",
        s(&script),
        "--search-fixture",
        s(&fixture("furnace/search.yaml")),
        "--nli-fixture",
        s(&fixture("furnace/nli.yaml")),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("claims [3, 2, 3]"));
    assert!(dir.path().join("cited.md").exists());
}

#[test]
fn help_lists_every_flag() {
    let help = String::from_utf8(run(&["generate", "--help"]).stdout).unwrap();
    for flag in [
        "--taxonomy",
        "--kpi",
        "--target",
        "--asset-class",
        "--asset-description",
        "--strategy",
        "--planner",
        "--gateway-config",
        "--script",
        "--replay",
        "--record",
        "--search-fixture",
        "--nli-fixture",
        "--max-rounds",
        "--confidence-threshold",
        "--seed",
        "--timestamp",
        "--out",
    ] {
        assert!(help.contains(flag), "missing {flag}");
    }
    assert_eq!(run(&["generate", "--taxonomy", "x", "--kpi", "k", "--target", "t", "--strategy", "react"]).status.code(), Some(2));
}
