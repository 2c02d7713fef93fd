use std::fs;
use std::process::Command;

fn selcache() -> Command {
    Command::new(env!("CARGO_BIN_EXE_selcache"))
}

#[test]
fn run_writes_identical_results_twice() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for sub in ["a", "b"] {
        let out = dir.path().join(sub);
        let status = selcache()
            .args(["run", "--preset", "tree-fig7", "--levels", "2", "--grid", "1", "--seeds", "1,2", "--duration", "5"])
            .env("SELCACHE_OUT_DIR", &out)
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(fs::read_to_string(out.join("results.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let lines: Vec<&str> = outputs[0].lines().collect();
    assert!(lines[0].starts_with("schema_version,"));
    assert!(lines[0].contains("hit_net,h_red,t_red,e_avg"));
    assert_eq!(lines.len(), 1 + 3 * 2);
}

#[test]
fn unknown_preset_is_rejected() {
    let out = selcache().args(["run", "--preset", "mesh"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn custom_preset_reads_scenario_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scenario.toml");
    fs::write(
        &cfg,
        "name = \"tiny\"\nduration = 3.0\nseeds = [7]\ncombinations = [\"SEL-EQU\"]\ncache_size_grid = [2.0]\n\
         [topology]\nkind = \"tree\"\nlevels = 2\ncontents = 20\n[traffic]\ncontent_rate = 3.0\nmean_size = 4.0\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let status =
        selcache().args(["run", "--preset", "custom", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert!(status.success());
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.contains(",tiny,SEL-EQU,2,7,"));
    assert!(out.join("runs/SEL-EQU_2_7.json").exists());
}

#[test]
fn trace_export_feeds_stack_distance_analysis() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.txt");
    let status = selcache()
        .args(["trace", "--preset", "tree-fig7", "--levels", "2", "--duration", "2", "--grid", "1", "-o"])
        .arg(&trace)
        .status()
        .unwrap();
    assert!(status.success());
    let out = selcache().arg("sd").arg(&trace).arg("--contents").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("avg_sd "));
    assert!(text.lines().any(|l| l.starts_with("defined ")));
}

#[test]
fn irm_prints_matching_laws() {
    let out = selcache().args(["irm", "--contents", "4", "--capacity", "2"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let value = |key: &str| -> f64 { text.lines().find_map(|l| l.strip_prefix(key)).unwrap().trim().parse().unwrap() };
    let (lru, sel, markov) = (value("lru_closed_form"), value("sel_closed_form"), value("lru_markov"));
    assert!((lru - sel).abs() < 1e-12);
    assert!((lru - markov).abs() < 1e-8);
}

#[test]
fn tandem_preset_writes_histograms() {
    let dir = tempfile::tempdir().unwrap();
    let status = selcache()
        .args(["run", "--preset", "tandem-fig3-4", "--seeds", "1", "--grid", "1"])
        .env("SELCACHE_OUT_DIR", dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let tandem = fs::read_to_string(dir.path().join("tandem.csv")).unwrap();
    assert_eq!(tandem.lines().count(), 1 + 4 * 3);
    assert!(fs::read_to_string(dir.path().join("sd_histogram.csv")).unwrap().lines().count() > 10);
}
