use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
scenario = "small"
seed = 11
targets = 2
n = 40
query_size = 300
posterior.mc_samples = 4
tasks.count = 4
pool.finetune_per_task = 120
merge.kind = ["task_arith", "task_wise_ada"]
objective.kind = ["train_risk", "pac_bayes_upper"]
cma.max_evals = 60
"#;

fn pacmerge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pacmerge"))
        .args(args)
        .env("PACMERGE_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn bad_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "delta = 2.0\n");
    let out = pacmerge(&["certify", "--config", &config, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("delta"));

    let config = write_config(dir.path(), "[merge]\nknd = \"ties\"\n");
    let out = pacmerge(&["gen-pool", "--config", &config]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("merge"));
}

#[test]
fn unknown_scenario_is_a_config_error() {
    let out = pacmerge(&["certify", "--scenario", "no-such-thing"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn selftest_passes() {
    let out = pacmerge(&["selftest"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.lines().all(|l| l.starts_with("PASS")), "{stdout}");
}

#[test]
fn certify_is_deterministic_and_reportable() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let mut tables = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let out = pacmerge(&["certify", "--config", &config, "--out", out_dir.to_str().unwrap(), "--format", "csv"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let table = std::fs::read_to_string(out_dir.join("small/table.csv")).unwrap();
        assert_eq!(String::from_utf8_lossy(&out.stdout), table);
        tables.push(table);
    }
    assert_eq!(tables[0], tables[1]);
    assert_eq!(tables[0].lines().count(), 1 + 2 * 2 * 2);
    assert!(tables[0].starts_with("task,scheme,objective,n,train_error,test_error,pb_bound,upper_bound,kl,certified_gap,vacuous\n"));

    let record = dir.path().join("a/small/record.json");
    let out = pacmerge(&["report", "--format", "md", record.to_str().unwrap()]);
    assert!(out.status.success());
    let md = String::from_utf8_lossy(&out.stdout);
    assert_eq!(md.lines().count(), 2 + 8);
    assert!(md.contains("**"));
}

#[test]
fn seed_flag_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let run = |seed: &str, sub: &str| {
        let out_dir = dir.path().join(sub);
        let out = pacmerge(&["gen-pool", "--config", &config, "--out", out_dir.to_str().unwrap(), "--seed", seed]);
        assert!(out.status.success());
        String::from_utf8_lossy(&out.stdout).trim().rsplit('/').next().unwrap().to_owned()
    };
    assert_ne!(run("1", "x"), run("2", "y"));
}

#[test]
fn unknown_format_fails() {
    let out = pacmerge(&["report", "--format", "xml", "/nonexistent/record.json"]);
    assert_eq!(out.status.code(), Some(1));
}
