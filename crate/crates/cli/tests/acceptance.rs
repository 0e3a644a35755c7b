//! Acceptance suite: eleven end-to-end criteria, each printed as one
//! PASS/FAIL line. Runs without the libtest harness so the lines are always
//! shown; exits non-zero if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use pure_core::environments::{
    make_deterministic_1d, make_linear_gaussian, make_ou, Deterministic1dParams, LinearGaussianParams, OuParams,
};
use pure_core::pure::{run_variant, RunConfig, RunContext, RunLog, Variant};
use pure_core::stats::{mean_var, welch_greater};
use pure_core::verify::{self, SuiteReport, VerifyOptions};
use pure_core::{observe, SamplerSpec};
use rayon::prelude::*;

const ORACLE_SEED: u64 = 2024;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn from_suite(r: pure_core::Result<SuiteReport>) -> Outcome {
    match r {
        Ok(r) => {
            let detail = r
                .checks
                .iter()
                .map(|c| format!("{} {:.4} vs {:.4}", c.name, c.value, c.bound))
                .collect::<Vec<_>>()
                .join("; ");
            outcome(r.passed, detail)
        }
        Err(e) => outcome(false, format!("error: {e}")),
    }
}

fn runs(ctx: &RunContext, variant: Variant, seeds: u64, cfg: impl Fn(u64) -> RunConfig + Sync) -> Vec<RunLog> {
    (0..seeds)
        .into_par_iter()
        .map(|s| run_variant(variant, ctx, &cfg(s)).expect("run"))
        .collect()
}

fn mean_gap(logs: &[RunLog]) -> f64 {
    logs.iter().map(|l| l.mean_suboptimality).sum::<f64>() / logs.len() as f64
}

fn gaps(logs: &[RunLog]) -> Vec<f64> {
    logs.iter().map(|l| l.mean_suboptimality).collect()
}

fn lg_ctx(n: usize) -> RunContext {
    let entry = make_linear_gaussian(&LinearGaussianParams::benchmark()).unwrap();
    RunContext::new(entry, n, 0.1, 1.0, ORACLE_SEED).unwrap()
}

fn measurement_noise() -> Outcome {
    let c = 0.5;
    let params = LinearGaussianParams {
        diffusion: c,
        ..LinearGaussianParams::default()
    };
    let e = make_linear_gaussian(&params).unwrap();
    let n = 100_000u64;
    let res: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|s| {
            let p = &e.grid.policies[(s % e.grid.policies.len() as u64) as usize];
            let t = (s % 97) as f64 / 97.0;
            let m = observe(&e.spec, p, &e.grid.initial_dists[0], t, &e.measurement, s).unwrap();
            let f = e.spec.drift.eval(&m.x, &m.u);
            let y: Vec<f64> = m.y.iter().zip(&f).map(|(a, b)| a - b).collect();
            (y, m.r - e.spec.reward.eval(&m.x, &m.u))
        })
        .collect();
    let target = c * c / e.measurement.delta;
    let mut ok = true;
    let mut detail = Vec::new();
    for i in 0..e.spec.state_dim {
        let (_, v) = mean_var(&res.iter().map(|r| r.0[i]).collect::<Vec<_>>());
        ok &= (v / target - 1.0).abs() <= 0.05;
        detail.push(format!("Var(y{i} - f) = {v:.4} vs {target:.4}"));
    }
    let (_, vr) = mean_var(&res.iter().map(|r| r.1).collect::<Vec<_>>());
    ok &= (vr - 1.0).abs() <= 0.05;
    detail.push(format!("Var(r - b) = {vr:.4} vs 1"));
    outcome(ok, detail.join(", "))
}

fn learning_curve() -> Outcome {
    let small = runs(&lg_ctx(64), Variant::Base, 100, |s| RunConfig::base(64, s));
    let large = runs(&lg_ctx(1024), Variant::Base, 100, |s| RunConfig::base(1024, s));
    let (m64, m1024) = (mean_gap(&small), mean_gap(&large));
    let (_, p) = welch_greater(&gaps(&small), &gaps(&large));
    outcome(
        p < 0.01 && m1024 < 0.5 * m64,
        format!("mean gap N=64 {m64:.5}, N=1024 {m1024:.5}, ratio {:.3}, one-sided p = {p:.2e}", m1024 / m64),
    )
}

fn switch_growth() -> Outcome {
    let mean_sw = |logs: &[RunLog]| logs.iter().map(|l| l.switch_count as f64).sum::<f64>() / logs.len() as f64;
    let lazy_small = runs(&lg_ctx(128), Variant::LowSwitch, 50, |s| RunConfig::low_switch(128, s));
    let lazy_large = runs(&lg_ctx(1024), Variant::LowSwitch, 50, |s| RunConfig::low_switch(1024, s));
    let base_small = runs(&lg_ctx(128), Variant::Base, 5, |s| RunConfig::base(128, s));
    let base_large = runs(&lg_ctx(1024), Variant::Base, 5, |s| RunConfig::base(1024, s));
    let (a, b) = (mean_sw(&lazy_small), mean_sw(&lazy_large));
    let base_ratio = mean_sw(&base_large) / mean_sw(&base_small);
    let ratio = b / a;
    outcome(
        a > 0.0 && ratio <= 2.5 && base_ratio == 8.0,
        format!("low-switch mean switches N=128 {a:.2}, N=1024 {b:.2}, ratio {ratio:.3}; base ratio {base_ratio}"),
    )
}

fn low_switch_quality() -> Outcome {
    let ctx = lg_ctx(512);
    let base = runs(&ctx, Variant::Base, 100, |s| RunConfig::base(512, s));
    let lazy = runs(&ctx, Variant::LowSwitch, 100, |s| RunConfig::low_switch(512, s));
    let (mb, ml) = (mean_gap(&base), mean_gap(&lazy));
    outcome(
        ml <= 1.5 * mb,
        format!("mean gap base {mb:.6}, low-switch {ml:.6}, ratio {:.3}", ml / mb),
    )
}

fn low_rollout_tradeoff() -> Outcome {
    let entry = make_ou(&OuParams::low_rollout_benchmark()).unwrap();
    let n = 512;
    let ctx = RunContext::new(entry, n, 0.1, 1.0, ORACLE_SEED).unwrap();
    let with_m = |m: usize| {
        let sampler = if m == 1 { SamplerSpec::UniformSingle } else { SamplerSpec::Equidistant { m } };
        runs(&ctx, Variant::LowRollout, 100, |s| RunConfig::low_rollout(n, sampler, s))
    };
    let (one, four, many) = (with_m(1), with_m(4), with_m(64));
    let (g1, g4, g64) = (mean_gap(&one), mean_gap(&four), mean_gap(&many));
    let rollouts_ok = four.iter().all(|l| l.rollout_count == n / 4);
    outcome(
        g4 <= 1.5 * g1 && rollouts_ok && g64 > g4,
        format!(
            "mean gap m=1 {g1:.5}, m=4 {g4:.5} (ratio {:.3}), m=64 {g64:.5}; m=4 rollouts all {}: {rollouts_ok}",
            g4 / g1,
            n / 4
        ),
    )
}

fn pure_bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_pure"))
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run_cli(config: &Path, out: &Path) -> Result<(), String> {
    let status = Command::new(pure_bin())
        .args(["run", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if status.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&status.stderr).into_owned())
    }
}

fn determinism() -> Outcome {
    let golden = std::fs::read_to_string(workspace_root().join("crates/core/tests/data/golden_deterministic_n8.json"))
        .expect("golden file");
    let replay = || {
        let entry = make_deterministic_1d(&Deterministic1dParams::default()).unwrap();
        let ctx = RunContext::new(entry, 8, 0.1, 1.0, 0).unwrap();
        let cfg = RunConfig {
            noiseless_reward: true,
            ..RunConfig::base(8, 7)
        };
        serde_json::to_string_pretty(&run_variant(Variant::Base, &ctx, &cfg).unwrap()).unwrap() + "\n"
    };
    let golden_ok = replay() == golden && replay() == golden;

    let mut cli_ok = true;
    let mut notes = Vec::new();
    for (config, name) in [
        ("configs/deterministic-golden.toml", "deterministic-golden"),
        ("configs/lg-schedule.toml", "lg-schedule"),
    ] {
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        for d in &dirs {
            if let Err(e) = run_cli(&workspace_root().join(config), d.path()) {
                cli_ok = false;
                notes.push(format!("{config}: {e}"));
            }
        }
        for file in ["summary.csv", "sweep.json"] {
            let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("runs").join(name).join(file)).ok();
            let same = read(&dirs[0]).is_some() && read(&dirs[0]) == read(&dirs[1]);
            cli_ok &= same;
            notes.push(format!("{name}/{file} identical: {same}"));
        }
    }
    outcome(golden_ok && cli_ok, format!("golden replay bit-exact: {golden_ok}; {}", notes.join(", ")))
}

fn main() {
    let opts = VerifyOptions::default();
    type Criterion<'a> = (&'a str, Box<dyn Fn() -> Outcome + 'a>);
    let criteria: Vec<Criterion> = vec![
        ("measurement noise statistics", Box::new(measurement_noise)),
        ("Euler-Maruyama weak order", Box::new(|| from_suite(verify::convergence(&opts)))),
        ("trajectory gap bound", Box::new(|| from_suite(verify::gronwall(&opts)))),
        ("confidence coverage", Box::new(|| from_suite(verify::coverage(&opts)))),
        ("learning curve", Box::new(learning_curve)),
        ("low-switch switch growth", Box::new(switch_growth)),
        ("low-switch quality", Box::new(low_switch_quality)),
        ("independency coefficient bound", Box::new(|| from_suite(verify::prop2(&opts)))),
        ("low-rollout tradeoff", Box::new(low_rollout_tradeoff)),
        ("eluder estimator sanity", Box::new(|| from_suite(verify::eluder(&opts)))),
        ("determinism and golden trace", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = f();
        failed += usize::from(!o.passed);
        println!(
            "criterion {:>2} {:<32} {} ({:.1}s) {}",
            i + 1,
            name,
            if o.passed { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            o.detail
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
