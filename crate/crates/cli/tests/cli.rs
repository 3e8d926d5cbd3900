use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
n_samples = 120
n_replicates = 3
ate_true_grid = [-5.0, 0.1, 5.0]
pi_grid = [0.4, 0.6]
methods = ["LM", "Lasso"]
scenarios = [{ confounding = "none", degree = 1 }, { confounding = "single_x3", degree = 2 }]
"#;

fn cflab(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cflab"))
        .args(args)
        .env("CFLAB_OUT_DIR", out_dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("experiment.toml");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn validate_accepts_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = cflab(&["validate"], dir.path());
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("150 cells x 200 replicates"), "{stdout}");
}

#[test]
fn validate_rejects_zero_effect() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "ate_true_grid = [-10.0, 0.0]\n");
    let out = cflab(&["validate", "--config", &config], dir.path());
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("ate_true_grid[1]"), "{stderr}");
}

#[test]
fn validate_rejects_unknown_keys_and_bad_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "n_replicate = 10\n");
    assert!(!cflab(&["validate", "--config", &config], dir.path()).status.success());
    assert!(!cflab(&["validate", "--scenario", "3a"], dir.path()).status.success());
    assert!(!cflab(&["validate", "--methods", "svm"], dir.path()).status.success());
    assert!(!cflab(&["validate", "--replicates", "0"], dir.path()).status.success());
    assert!(!cflab(&["validate", "--config", "/no/such/file.toml"], dir.path()).status.success());
}

#[test]
fn simulate_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("run");
    let out = cflab(&["simulate", "--config", &config, "--seed", "77"], &out_dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3 * 2);
    let md = std::fs::read_to_string(out_dir.join("results.md")).unwrap();
    assert!(md.contains("## Scenario 2b"));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed"], 77);
    assert_eq!(manifest["config"]["n_replicates"], 3);
    assert_eq!(manifest["complete"], true);
    assert_eq!(manifest["cells"].as_array().unwrap().len(), 12);

    let echo = out_dir.join("config.toml");
    let again = dir.path().join("again");
    let out = cflab(&["simulate", "--config", echo.to_str().unwrap()], &again);
    assert!(out.status.success());
    assert_eq!(std::fs::read(again.join("results.csv")).unwrap(), csv.as_bytes());
}

#[test]
fn flag_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("out");
    let out = cflab(
        &[
            "simulate",
            "--config",
            &config,
            "--scenario",
            "2a",
            "--methods",
            "lm",
            "--replicates",
            "2",
            "--out-dir",
            out_dir.to_str().unwrap(),
        ],
        &dir.path().join("unused"),
    );
    assert!(out.status.success());
    assert!(!dir.path().join("unused").exists());
    let csv = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6);
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "2a");
    assert!(row[10].is_empty());
}

#[test]
fn aborted_cells_give_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}\n[confounding_rule]\nlower = 1000.0\nupper = 2000.0\n");
    let config = write_config(dir.path(), &text);

    let strict = dir.path().join("strict");
    let out = cflab(&["simulate", "--config", &config], &strict);
    assert_eq!(out.status.code(), Some(1));
    assert!(!strict.join("results.csv").exists());
    assert!(strict.join("manifest.json").exists());

    let partial = dir.path().join("partial");
    let out = cflab(&["simulate", "--config", &config, "--allow-partial"], &partial);
    assert_eq!(out.status.code(), Some(1));
    let csv = std::fs::read_to_string(partial.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6);
    assert!(std::fs::read_to_string(partial.join("results.md")).unwrap().contains("Aborted"));
}

#[test]
fn render_rebuilds_tables_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("run");
    assert!(cflab(&["simulate", "--config", &config], &out_dir).status.success());
    let original = std::fs::read_to_string(out_dir.join("results.md")).unwrap();

    let rendered = dir.path().join("rendered.md");
    let out = cflab(&["render", "--output", rendered.to_str().unwrap()], &out_dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&rendered).unwrap();
    let tables = |s: &str| s[s.find("## Scenario").unwrap()..].to_string();
    assert_eq!(tables(&text), tables(&original));

    let missing = cflab(&["render", "--input", "/no/such.csv"], &out_dir);
    assert!(!missing.status.success());
}
