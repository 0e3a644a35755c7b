use super::*;
use crate::environments::{Deterministic1dParams, EnvConfig};
use crate::measurement::SamplerSpec;

fn det_ctx(n: usize) -> RunContext {
    let entry = EnvConfig::Deterministic1d(Deterministic1dParams::default()).build().unwrap();
    RunContext::new(entry, n, 0.1, 1.0, 11).unwrap()
}

#[test]
fn counts_add_up() {
    let ctx = det_ctx(16);
    let log = run_pure_base(&ctx, &RunConfig::base(16, 3)).unwrap();
    assert_eq!(log.episodes.len(), 16);
    assert_eq!(log.measurement_count, 16);
    assert_eq!(log.rollout_count, 16);
    assert_eq!(log.switch_count, 16);
    assert!(log.all_covered);
    let mean = log.episodes.iter().map(|e| e.suboptimality).sum::<f64>() / 16.0;
    assert!((log.mean_suboptimality - mean).abs() < 1e-15);
}

#[test]
fn same_seed_same_log() {
    let ctx = det_ctx(8);
    let a = run(&ctx, &RunConfig::low_switch(8, 5)).unwrap();
    let b = run(&ctx, &RunConfig::low_switch(8, 5)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn single_measurement_low_rollout_is_base() {
    let ctx = det_ctx(12);
    let a = run_pure_base(&ctx, &RunConfig::base(12, 9)).unwrap();
    let b = run_pure_low_rollout(&ctx, &RunConfig::low_rollout(12, SamplerSpec::UniformSingle, 9)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn m_must_divide_n() {
    let ctx = det_ctx(10);
    let err = run_pure_low_rollout(&ctx, &RunConfig::low_rollout(10, SamplerSpec::Equidistant { m: 4 }, 0)).unwrap_err();
    assert!(err.to_string().contains("m must divide N"), "{err}");
}

#[test]
fn drivers_check_their_rule() {
    let ctx = det_ctx(4);
    assert!(matches!(run_pure_base(&ctx, &RunConfig::low_switch(4, 0)), Err(Error::Config(_))));
    assert!(matches!(run_pure_low_switch(&ctx, &RunConfig::base(4, 0)), Err(Error::Config(_))));
    assert!(matches!(run_schedule_variant(&ctx, &RunConfig::base(4, 0)), Err(Error::Config(_))));
}

#[test]
fn schedule_rebuilds_only_at_boundaries() {
    let ctx = det_ctx(20);
    let cfg = RunConfig::scheduled(20, Schedule::Geometric { first: 2, eta: 2.0 }, 1);
    let log = run_schedule_variant(&ctx, &cfg).unwrap();
    let switched: Vec<usize> = log.episodes.iter().filter(|e| e.switched_f).map(|e| e.episode).collect();
    assert_eq!(switched, vec![2, 6, 14, 20]);
    assert_eq!(log.switch_count, 4);
}

#[test]
fn low_switch_never_switches_more_than_base() {
    let ctx = det_ctx(32);
    let base = run(&ctx, &RunConfig::base(32, 2)).unwrap();
    let low = run(&ctx, &RunConfig::low_switch(32, 2)).unwrap();
    assert!(low.switch_count <= base.switch_count);
}

#[test]
fn csv_is_cumulative() {
    let ctx = det_ctx(8);
    let log = run(&ctx, &RunConfig::low_rollout(8, SamplerSpec::Equidistant { m: 2 }, 0)).unwrap();
    let mut buf = Vec::new();
    log.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let last = text.lines().last().unwrap();
    assert!(last.starts_with("4,"), "{last}");
    assert!(last.ends_with(",8,4"), "{last}");
}
