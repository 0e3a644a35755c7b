//! End-to-end checks of the `pure` binary: exit codes, output layout,
//! reproducibility and reading back what it writes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use proptest::prelude::*;
use pure_cli::commands::{read_compare_csv, read_summary_csv, SweepResult};
use pure_cli::config::{parse_str, ExperimentConfig};
use tempfile::TempDir;

fn pure(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pure"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("PURE_LOG", "error")
        .output()
        .expect("spawn pure")
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, file: &str, text: &str) -> PathBuf {
    let p = dir.join(file);
    std::fs::write(&p, text).unwrap();
    p
}

fn small_config(name: &str, variant: &str, extra_run: &str, seeds: usize) -> String {
    format!(
        r#"name = "{name}"
variant = "{variant}"

[env]
name = "linear-gaussian"
params = {{ rho_f = 1.0, theta_drift = [-0.3, 0.0, -0.4, 0.0, -0.3, 0.3], theta_reward = [0.5, 0.0, 0.0], controls = [0.0, 0.5, 1.0] }}

[run]
n = 16
planning_rollouts = 8
{extra_run}

[seeds]
base = 3
count = {seeds}
"#
    )
}

#[test]
fn run_writes_one_summary_row_per_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "a.toml", &small_config("tiny", "base", "", 3));
    let o = pure(&["run", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let run_dir = dir.path().join("runs/tiny");
    let rows = read_summary_csv(&run_dir.join("summary.csv")).unwrap();
    assert_eq!(rows.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![3, 4, 5]);
    assert!(rows.iter().all(|r| r.measurement_count == 16 && r.rollout_count == 16));
    for seed in 3..6 {
        assert!(run_dir.join(format!("seed_{seed}.json")).is_file());
    }
    let sweep: SweepResult = serde_json::from_slice(&std::fs::read(run_dir.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(sweep.seeds, vec![3, 4, 5]);
    assert_eq!(sweep.provenance.config_hash.len(), 64);
    assert!(run_dir.join("timing.json").is_file());
}

#[test]
fn seed_count_flag_overrides_the_config() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "a.toml", &small_config("tiny", "base", "", 3));
    let o = pure(&["--seed-count", "1", "run", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_summary_csv(&dir.path().join("runs/tiny/summary.csv")).unwrap();
    assert_eq!(rows.len(), 1);
}

#[test]
fn rerun_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "a.toml", &small_config("tiny", "low-switch", "", 2));
    let outs = [dir.path().join("one"), dir.path().join("two")];
    for (out, workers) in outs.iter().zip(["1", "4"]) {
        let o = pure(&["--workers", workers, "run", "--config", cfg.to_str().unwrap()], out);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for file in ["summary.csv", "sweep.json", "seed_3.json", "seed_4.json"] {
        let read = |d: &Path| std::fs::read(d.join("runs/tiny").join(file)).unwrap();
        assert_eq!(read(&outs[0]), read(&outs[1]), "{file} differs");
    }
}

#[test]
fn bad_m_exits_2_with_a_line_number() {
    let dir = TempDir::new().unwrap();
    let cfg = root().join("configs/bad-m.toml");
    let o = pure(&["run", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("bad-m.toml:9: m must divide N"), "{err}");
    assert!(!dir.path().join("runs").exists());
}

#[test]
fn unknown_key_exits_2() {
    let dir = TempDir::new().unwrap();
    let text = small_config("tiny", "base", "learning_rate = 0.1", 1);
    let cfg = write_config(dir.path(), "a.toml", &text);
    let o = pure(&["run", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("a.toml:11:"), "{}", stderr(&o));
}

#[test]
fn missing_config_exits_2() {
    let dir = TempDir::new().unwrap();
    let o = pure(&["run", "--config", "/nonexistent/x.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failure_inside_an_episode_exits_3_and_names_it() {
    // A finite-difference measurement needs t + delta inside the horizon;
    // uniform times land past that often enough over 64 episodes.
    let dir = TempDir::new().unwrap();
    let text = small_config("fd", "base", "measurement_mode = \"finite-difference\"", 1).replace("n = 16", "n = 64");
    let cfg = write_config(dir.path(), "fd.toml", &text);
    let o = pure(&["run", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("seed 3: episode "), "{err}");
    assert!(err.contains("leaves the horizon"), "{err}");
}

#[test]
fn verify_eluder_passes_and_unknown_suite_exits_2() {
    let dir = TempDir::new().unwrap();
    let o = pure(&["verify", "eluder"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("verify_eluder.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);

    let o = pure(&["verify", "everything"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn compare_counts_rollouts_per_sampler() {
    let dir = TempDir::new().unwrap();
    let base = write_config(dir.path(), "b.toml", &small_config("b", "base", "", 2));
    let lazy = write_config(
        dir.path(),
        "r.toml",
        &small_config("r", "low-rollout", "sampler = { kind = \"equidistant\", m = 4 }", 2),
    );
    let o = pure(
        &["compare", "--config", base.to_str().unwrap(), "--config", lazy.to_str().unwrap()],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_compare_csv(&dir.path().join("compare.csv")).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].mean_rollout_count / rows[1].mean_rollout_count, 4.0);
    assert_eq!(rows[0].mean_measurement_count, rows[1].mean_measurement_count);
    assert_eq!(rows[1].m, 4);
}

#[test]
fn compare_of_identical_configs_agrees() {
    let dir = TempDir::new().unwrap();
    let a = write_config(dir.path(), "a.toml", &small_config("a", "base", "", 2));
    let b = write_config(dir.path(), "b.toml", &small_config("b", "base", "", 2));
    let o = pure(&["compare", "--config", a.to_str().unwrap(), "--config", b.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_compare_csv(&dir.path().join("compare.csv")).unwrap();
    assert_eq!(rows[0].mean_suboptimality, rows[1].mean_suboptimality);
    assert_eq!(rows[0].sd_suboptimality, rows[1].sd_suboptimality);
    assert_eq!(rows[0].mean_switch_count, rows[1].mean_switch_count);
}

#[test]
fn compare_rejects_mismatched_budgets() {
    let dir = TempDir::new().unwrap();
    let a = write_config(dir.path(), "a.toml", &small_config("a", "base", "", 1));
    let b = write_config(dir.path(), "b.toml", &small_config("b", "base", "", 1).replace("n = 16", "n = 32"));
    let o = pure(&["compare", "--config", a.to_str().unwrap(), "--config", b.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = pure(&["compare", "--config", a.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn catalog_lists_every_environment() {
    let dir = TempDir::new().unwrap();
    let o = pure(&["catalog"], dir.path());
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let names: Vec<String> = rdr.records().map(|r| r.unwrap()[0].to_string()).collect();
    assert_eq!(names, ["linear-gaussian", "ou", "deterministic-1d"]);
}

#[test]
fn run_log_csv_reads_back() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "a.toml", &small_config("tiny", "base", "", 1));
    assert!(pure(&["run", "--config", cfg.to_str().unwrap()], dir.path()).status.success());
    let log: pure_core::RunLog =
        serde_json::from_slice(&std::fs::read(dir.path().join("runs/tiny/seed_3.json")).unwrap()).unwrap();
    let mut buf = Vec::new();
    log.write_csv(&mut buf).unwrap();
    let mut rdr = csv::Reader::from_reader(buf.as_slice());
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 16);
    let last = rows.last().unwrap();
    assert_eq!(last[4].parse::<usize>().unwrap(), log.measurement_count);
    assert_eq!(last[5].parse::<usize>().unwrap(), log.rollout_count);
}

#[test]
fn shipped_configs_parse() {
    for entry in std::fs::read_dir(root().join("configs")).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        let cfg = parse_str(&text, &path).unwrap();
        let back = parse_str(&toml::to_string(&cfg).unwrap(), Path::new("x.toml")).unwrap();
        assert_eq!(back, cfg, "{}", path.display());
    }
}

fn arb_config() -> impl Strategy<Value = ExperimentConfig> {
    let variant = prop_oneof![Just("base"), Just("low-switch"), Just("low-rollout")];
    (variant, 1usize..6, 0u64..1000, 1usize..8, 0.01f64..0.5, any::<bool>(), prop::option::of(1usize..4)).prop_map(
        |(variant, k, base, count, delta, noiseless, m)| {
            let m = m.map(|e| 1usize << e);
            let sampler = match m {
                Some(m) => format!("sampler = {{ kind = \"equidistant\", m = {m} }}"),
                None => String::new(),
            };
            let text = format!(
                "name = \"p\"\nvariant = \"{variant}\"\n[env]\nname = \"ou\"\nparams = {{ u_min = 0.5 }}\n\
                 [run]\nn = {}\ndelta = {delta}\nnoiseless_reward = {noiseless}\n{sampler}\n\
                 [seeds]\nbase = {base}\ncount = {count}\n",
                16 * k
            );
            parse_str(&text, Path::new("p.toml")).unwrap()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_serialization_is_a_fixed_point(cfg in arb_config()) {
        let text = toml::to_string(&cfg).unwrap();
        let back = parse_str(&text, Path::new("q.toml")).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(toml::to_string(&back).unwrap(), text);
    }
}
