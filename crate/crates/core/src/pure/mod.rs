//! Episode drivers. Every variant runs the same loop: plan optimistically
//! over the current confidence sets, execute one rollout and measure it, then
//! decide whether to rebuild the sets. The variants differ only in the
//! measurement sampler and the rebuild rule.

mod schedule;

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environments::EnvCatalogEntry;
use crate::error::{Error, Result};
use crate::function_classes::{compute_radii, ConfidenceRadii, Dataset, LossTracker};
use crate::measurement::{draw_measurement_times, observe_path, SamplerSpec};
use crate::planner::{exact_optimal, OptimalityOracle, ReturnTable, PLANNING_ROLLOUTS};
use crate::rng::{self, tag};

pub use schedule::Schedule;

/// When the confidence sets are rebuilt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum UpdateRule {
    /// After every episode.
    EveryEpisode,
    /// When the planned model's loss reaches the running minimum plus
    /// `5 beta`, separately for drift and reward.
    TriggerFiveBeta,
    /// At batch boundaries only.
    Schedule { schedule: Schedule },
}

/// Algorithm variants addressable from configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Base,
    LowSwitch,
    LowRollout,
    Schedule,
}

impl Variant {
    /// Update rule the variant uses unless a config says otherwise.
    pub fn default_rule(self) -> Option<UpdateRule> {
        match self {
            Variant::Base | Variant::LowRollout => Some(UpdateRule::EveryEpisode),
            Variant::LowSwitch => Some(UpdateRule::TriggerFiveBeta),
            Variant::Schedule => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::LowSwitch => "low-switch",
            Variant::LowRollout => "low-rollout",
            Variant::Schedule => "schedule",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Total measurement budget `N`.
    pub n: usize,
    pub sampler: SamplerSpec,
    pub update_rule: UpdateRule,
    pub seed: u64,
    pub planning_rollouts: usize,
    /// Test-only: noise-free reward observations.
    pub noiseless_reward: bool,
}

impl RunConfig {
    pub fn base(n: usize, seed: u64) -> Self {
        Self {
            n,
            sampler: SamplerSpec::UniformSingle,
            update_rule: UpdateRule::EveryEpisode,
            seed,
            planning_rollouts: PLANNING_ROLLOUTS,
            noiseless_reward: false,
        }
    }

    pub fn low_switch(n: usize, seed: u64) -> Self {
        Self {
            update_rule: UpdateRule::TriggerFiveBeta,
            ..Self::base(n, seed)
        }
    }

    pub fn low_rollout(n: usize, sampler: SamplerSpec, seed: u64) -> Self {
        Self {
            sampler,
            ..Self::base(n, seed)
        }
    }

    pub fn scheduled(n: usize, schedule: Schedule, seed: u64) -> Self {
        Self {
            update_rule: UpdateRule::Schedule { schedule },
            ..Self::base(n, seed)
        }
    }

    pub fn m(&self) -> usize {
        self.sampler.m()
    }

    /// Number of episodes, `N / m`.
    pub fn episodes(&self) -> Result<usize> {
        self.sampler.validate()?;
        let m = self.m();
        if self.n == 0 {
            return Err(Error::Config("N must be at least 1".into()));
        }
        if !self.n.is_multiple_of(m) {
            return Err(Error::Config(format!("m must divide N (m = {m}, N = {})", self.n)));
        }
        if self.planning_rollouts == 0 {
            return Err(Error::Config("planning_rollouts must be at least 1".into()));
        }
        Ok(self.n / m)
    }
}

/// Inputs shared by every seed of an experiment: the environment, the true
/// values of every grid pair and the confidence radii.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub entry: EnvCatalogEntry,
    pub oracle: OptimalityOracle,
    pub radii: ConfidenceRadii,
    pub dt: f64,
}

impl RunContext {
    /// Radii use the full budget `n` and the entry's drift-noise bound.
    pub fn new(entry: EnvCatalogEntry, n: usize, delta: f64, c_scale: f64, oracle_seed: u64) -> Result<Self> {
        let dt = entry.dt();
        let oracle = exact_optimal(&entry.spec, &entry.grid, dt, entry.oracle_rollouts(), oracle_seed)?;
        let radii = compute_radii(
            n,
            delta,
            entry.measurement.g_bound,
            &entry.drift_class,
            &entry.reward_class,
            c_scale,
        )?;
        Ok(Self { entry, oracle, radii, dt })
    }

    pub fn with_radii(mut self, radii: ConfidenceRadii) -> Self {
        self.radii = radii;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// 1-based.
    pub episode: usize,
    pub policy_id: usize,
    pub q_id: usize,
    pub f_index: usize,
    pub b_index: usize,
    pub planned_value: f64,
    /// The drift set was rebuilt after this episode.
    pub switched_f: bool,
    pub switched_r: bool,
    pub measurements: usize,
    /// `optimal value - R(pi_n, q_n)`.
    pub suboptimality: f64,
    /// Both true models were in the sets used to plan this episode.
    pub covered: bool,
    pub f_set_size: usize,
    pub r_set_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalChoice {
    pub episode: usize,
    pub policy_id: usize,
    pub q_id: usize,
    pub suboptimality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub seed: u64,
    pub n_budget: usize,
    pub m: usize,
    pub update_rule: UpdateRule,
    pub noiseless_reward: bool,
    pub radii: ConfidenceRadii,
    pub optimal_value: f64,
    pub episodes: Vec<EpisodeRecord>,
    /// Episodes after which at least one set was rebuilt.
    pub switch_count: usize,
    pub rollout_count: usize,
    pub measurement_count: usize,
    /// Uniformly drawn episode whose plan is the output.
    pub final_choice: FinalChoice,
    /// Expected suboptimality of the uniform pick: the mean over episodes.
    pub mean_suboptimality: f64,
    pub all_covered: bool,
}

impl RunLog {
    /// CSV rows `episode,subopt,switchF,switchR,meas,rollouts` with cumulative
    /// measurement and rollout counts.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["episode", "subopt", "switchF", "switchR", "meas", "rollouts"])?;
        let mut meas = 0;
        for (i, e) in self.episodes.iter().enumerate() {
            meas += e.measurements;
            wtr.write_record([
                e.episode.to_string(),
                e.suboptimality.to_string(),
                u8::from(e.switched_f).to_string(),
                u8::from(e.switched_r).to_string(),
                meas.to_string(),
                (i + 1).to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn drift_switches(&self) -> usize {
        self.episodes.iter().filter(|e| e.switched_f).count()
    }

    pub fn reward_switches(&self) -> usize {
        self.episodes.iter().filter(|e| e.switched_r).count()
    }
}

/// Runs any variant described by `cfg`.
pub fn run(ctx: &RunContext, cfg: &RunConfig) -> Result<RunLog> {
    let episodes = cfg.episodes()?;
    let entry = &ctx.entry;
    let boundaries = match &cfg.update_rule {
        UpdateRule::Schedule { schedule } => schedule.boundaries(episodes)?,
        _ => Vec::new(),
    };
    let mut mcfg = entry.measurement;
    mcfg.noiseless_reward = cfg.noiseless_reward;
    let (beta_f, beta_r) = (ctx.radii.beta_f, ctx.radii.beta_r);

    let table = ReturnTable::for_classes(
        &entry.spec,
        &entry.grid,
        &entry.drift_class,
        &entry.reward_class,
        ctx.dt,
        cfg.planning_rollouts,
        rng::derive_seed(cfg.seed, &[tag::PLANNING]),
    )?;
    let mut f_track = LossTracker::new(&entry.drift_class)?;
    let mut r_track = LossTracker::new(&entry.reward_class)?;
    let mut f_set: Vec<usize> = (0..entry.drift_class.len().unwrap_or(0)).collect();
    let mut r_set: Vec<usize> = (0..entry.reward_class.len().unwrap_or(0)).collect();
    let mut data = Dataset::new();
    let mut records = Vec::with_capacity(episodes);

    for n in 1..=episodes {
        let mut step = || -> Result<EpisodeRecord> {
            let choice = table.argmax(&f_set, &r_set)?;
            let ep_seed = rng::derive_seed(cfg.seed, &[tag::EPISODE, n as u64]);
            let mut times = draw_measurement_times(&cfg.sampler, entry.spec.horizon, ep_seed)?;
            times.sort_by(|a, b| a.total_cmp(b));
            let batch = observe_path(
                &entry.spec,
                &entry.grid.policies[choice.policy_id],
                &entry.grid.initial_dists[choice.q_id],
                &times,
                &mcfg,
                ctx.dt,
                rng::derive_seed(ep_seed, &[tag::OBSERVATION]),
                n,
            )?;
            Ok(EpisodeRecord {
                episode: n,
                policy_id: choice.policy_id,
                q_id: choice.q_id,
                f_index: choice.f_index,
                b_index: choice.b_index,
                planned_value: choice.value,
                switched_f: false,
                switched_r: false,
                measurements: batch.len(),
                suboptimality: ctx.oracle.gap(choice.policy_id, choice.q_id),
                covered: f_set.contains(&entry.truth_drift) && r_set.contains(&entry.truth_reward),
                f_set_size: f_set.len(),
                r_set_size: r_set.len(),
            })
            .map(|rec| (rec, batch))
            .and_then(|(rec, batch)| {
                f_track.update(&entry.drift_class, &batch)?;
                r_track.update(&entry.reward_class, &batch)?;
                data.extend(batch);
                Ok(rec)
            })
        };
        let mut rec = step().map_err(|e| e.at_episode(n))?;
        let (rebuild_f, rebuild_r) = match &cfg.update_rule {
            UpdateRule::EveryEpisode => (true, true),
            UpdateRule::TriggerFiveBeta => (
                f_track.losses()[rec.f_index] >= f_track.min_loss() + 5.0 * beta_f,
                r_track.losses()[rec.b_index] >= r_track.min_loss() + 5.0 * beta_r,
            ),
            UpdateRule::Schedule { .. } => {
                let b = boundaries.binary_search(&n).is_ok();
                (b, b)
            }
        };
        if rebuild_f {
            f_set = f_track.members(beta_f);
        }
        if rebuild_r {
            r_set = r_track.members(beta_r);
        }
        rec.switched_f = rebuild_f;
        rec.switched_r = rebuild_r;
        log::debug!(
            "episode {n}: pi {} f {} b {} gap {:.4} |F| {} |R| {}",
            rec.policy_id,
            rec.f_index,
            rec.b_index,
            rec.suboptimality,
            f_set.len(),
            r_set.len()
        );
        records.push(rec);
    }

    let pick = rng::stream(cfg.seed, &[tag::OUTPUT_PICK]).random_range(0..episodes);
    let picked = &records[pick];
    let mean_suboptimality = records.iter().map(|r| r.suboptimality).sum::<f64>() / episodes as f64;
    Ok(RunLog {
        seed: cfg.seed,
        n_budget: cfg.n,
        m: cfg.m(),
        update_rule: cfg.update_rule.clone(),
        noiseless_reward: cfg.noiseless_reward,
        radii: ctx.radii,
        optimal_value: ctx.oracle.optimal_value,
        switch_count: records.iter().filter(|r| r.switched_f || r.switched_r).count(),
        rollout_count: episodes,
        measurement_count: data.len(),
        final_choice: FinalChoice {
            episode: picked.episode,
            policy_id: picked.policy_id,
            q_id: picked.q_id,
            suboptimality: picked.suboptimality,
        },
        mean_suboptimality,
        all_covered: records.iter().all(|r| r.covered),
        episodes: records,
    })
}

fn require(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(msg.into()))
    }
}

/// Checks the preconditions of `variant` on `cfg` without running anything.
pub fn check_variant(variant: Variant, cfg: &RunConfig) -> Result<()> {
    cfg.episodes()?;
    match variant {
        Variant::Base => {
            require(cfg.m() == 1, "the base algorithm takes m = 1")?;
            require(cfg.update_rule == UpdateRule::EveryEpisode, "the base algorithm rebuilds every episode")
        }
        Variant::LowSwitch => {
            require(cfg.m() == 1, "the low-switch algorithm takes m = 1")?;
            require(
                cfg.update_rule == UpdateRule::TriggerFiveBeta,
                "the low-switch algorithm uses the 5 beta trigger",
            )
        }
        Variant::LowRollout => require(
            cfg.update_rule == UpdateRule::EveryEpisode,
            "the low-rollout algorithm rebuilds every episode",
        ),
        Variant::Schedule => require(
            matches!(cfg.update_rule, UpdateRule::Schedule { .. }),
            "the schedule variant needs a schedule update rule",
        ),
    }
}

/// One uniformly timed measurement per episode, sets rebuilt every episode.
pub fn run_pure_base(ctx: &RunContext, cfg: &RunConfig) -> Result<RunLog> {
    run_variant(Variant::Base, ctx, cfg)
}

/// Sets carried over until the planned model falls `5 beta` behind.
pub fn run_pure_low_switch(ctx: &RunContext, cfg: &RunConfig) -> Result<RunLog> {
    run_variant(Variant::LowSwitch, ctx, cfg)
}

/// `m` measurements from each rollout, `N / m` episodes.
pub fn run_pure_low_rollout(ctx: &RunContext, cfg: &RunConfig) -> Result<RunLog> {
    run_variant(Variant::LowRollout, ctx, cfg)
}

/// Sets rebuilt at batch boundaries only.
pub fn run_schedule_variant(ctx: &RunContext, cfg: &RunConfig) -> Result<RunLog> {
    run_variant(Variant::Schedule, ctx, cfg)
}

/// Runs `variant` after checking its preconditions.
pub fn run_variant(variant: Variant, ctx: &RunContext, cfg: &RunConfig) -> Result<RunLog> {
    check_variant(variant, cfg)?;
    run(ctx, cfg)
}

#[cfg(test)]
mod tests;
