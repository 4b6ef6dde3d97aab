//! Experiment driver: training runs, evaluations, baselines and sweeps,
//! each rendered as CSV with the resolved configuration echoed in `#`
//! comment lines.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::agent::{evaluate, train, Agent, EvalStats, FixedPolicy, GreedyPolicy, Policy, RandomPolicy, TrainStats};
use crate::codebook::{BsCodebook, Codebooks, IrsCodebook};
use crate::config::ExperimentConfig;
use crate::env::{Environment, Feedback, Mdp, Normalizer};
use crate::error::{Error, Result};
use crate::numerics::{norm_sq, ComplexMatrix};

pub const TRAIN_HEADER: &str = "episode,epsilon,mean_reward,mean_secrecy_rate,qos_sat_prob,mean_loss";
pub const EVAL_HEADER: &str = "approach,seed,avg_secrecy_rate,qos_sat_prob,qos_secrecy,qos_rate,avg_reward";
pub const SWEEP_HEADER: &str = "approach,sweep_var,value,seed,avg_secrecy_rate,qos_sat_prob";

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent RNG streams derived from one run seed.
///
/// The evaluation stream depends only on the run seed, so every approach
/// evaluated under the same seed sees the same channel realizations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub env: u64,
    pub agent: u64,
    pub warmup: u64,
    pub eval: u64,
}

impl Seeds {
    pub fn derive(seed: u64) -> Self {
        let a = splitmix64(seed);
        let b = splitmix64(a);
        let c = splitmix64(b);
        let d = splitmix64(c);
        Self {
            env: a,
            agent: b,
            warmup: c,
            eval: d,
        }
    }
}

/// Trains one agent; the agent mode comes from `cfg.agent`.
pub fn train_agent(cfg: &ExperimentConfig, seed: u64) -> Result<(TrainStats, Agent)> {
    let seeds = Seeds::derive(seed);
    let params = cfg.env_params()?;
    let books = cfg.codebooks()?;
    let normalizer = Normalizer::warm_up(&params, &books, cfg.warmup_steps, seeds.warmup)?;
    let mut env = Environment::new(params.clone(), books.clone(), seeds.env)?;
    let mut agent = Agent::new(cfg.agent.clone(), params.state_len(), books.len(), normalizer, seeds.agent)?;
    let stats = train(&mut agent, &mut env, cfg.episodes)?;
    Ok((stats, agent))
}

fn echo(cfg: &ExperimentConfig, seed: u64, extra: &[(&str, String)]) -> String {
    let mut resolved = cfg.clone();
    resolved.seed = seed;
    let mut s = String::new();
    for line in resolved.to_text().lines() {
        let _ = writeln!(s, "# {line}");
    }
    let _ = writeln!(s, "# p_max_w = {:e}", cfg.p_max_w());
    let _ = writeln!(s, "# noise_w = {:e}", cfg.noise_w());
    let _ = writeln!(s, "# rho_resolved = {}", cfg.rho);
    for (k, v) in extra {
        let _ = writeln!(s, "# {k} = {v}");
    }
    s
}

/// Extracts the configuration echoed at the top of an output CSV.
pub fn config_from_csv(text: &str) -> Result<ExperimentConfig> {
    let mut body = String::new();
    for line in text.lines() {
        let Some(rest) = line.strip_prefix("# ") else { break };
        let key = rest.split('=').next().unwrap_or("").trim();
        if matches!(key, "p_max_w" | "noise_w" | "rho_resolved" | "sweep_var" | "sweep_values" | "approaches") {
            continue;
        }
        body.push_str(rest);
        body.push('\n');
    }
    ExperimentConfig::parse(&body)
}

pub fn train_csv(cfg: &ExperimentConfig, seed: u64, stats: &TrainStats) -> String {
    let mut s = echo(cfg, seed, &[]);
    let _ = writeln!(s, "{TRAIN_HEADER}");
    for e in stats {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            e.episode, e.epsilon, e.mean_reward, e.mean_secrecy_rate, e.qos_sat_prob, e.mean_loss
        );
    }
    s
}

/// Trains with `cfg.seed` and returns the learning-curve CSV and the agent.
pub fn run_train(cfg: &ExperimentConfig) -> Result<(String, Agent)> {
    let (stats, agent) = train_agent(cfg, cfg.seed)?;
    Ok((train_csv(cfg, cfg.seed, &stats), agent))
}

fn eval_env(cfg: &ExperimentConfig, seed: u64) -> Result<Environment> {
    Environment::new(cfg.env_params()?, cfg.codebooks()?, Seeds::derive(seed).eval)
}

/// Greedy rollouts of `policy` on the evaluation stream of `seed`.
pub fn evaluate_policy(cfg: &ExperimentConfig, policy: &mut dyn Policy, seed: u64) -> Result<EvalStats> {
    let mut env = eval_env(cfg, seed)?;
    evaluate(policy, &mut env, cfg.eval_episodes)
}

/// Uniformly random joint action every step, no learning.
pub fn baseline_random_phase(cfg: &ExperimentConfig, seed: u64) -> Result<EvalStats> {
    evaluate_policy(cfg, &mut RandomPolicy::new(splitmix64(Seeds::derive(seed).eval)), seed)
}

/// Maximum-ratio precoder `v_k = sqrt(P/K) h_k / |h_k|` on the direct
/// channels, matched to the `h^H v` convention of the rate model. Columns
/// of zero channels are left zero.
pub fn mrt_precoder(h_bu: &[Vec<crate::numerics::Complex>], p_max: f64) -> ComplexMatrix {
    let k = h_bu.len();
    let n = h_bu.first().map_or(0, Vec::len);
    let amp = (p_max / k as f64).sqrt();
    ComplexMatrix::from_fn(n, k, |row, col| {
        let h = &h_bu[col];
        let norm = norm_sq(h).sqrt();
        if norm > 0.0 {
            h[row] * (amp / norm)
        } else {
            crate::numerics::Complex::new(0.0, 0.0)
        }
    })
}

/// The no-IRS system driven by a single-entry MRT codebook recomputed
/// from the estimated channels before every step.
pub struct MrtNoIrs {
    env: Environment,
    p_max: f64,
}

impl MrtNoIrs {
    pub fn new(cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        let mut params = cfg.env_params()?;
        params.disable_irs = true;
        let books = cfg.codebooks()?;
        let env = Environment::new(params, books, Seeds::derive(seed).eval)?;
        let mut s = Self { env, p_max: cfg.p_max_w() };
        s.refresh()?;
        Ok(s)
    }

    fn refresh(&mut self) -> Result<()> {
        let ch = self.env.channels();
        let v = mrt_precoder(&ch.h_bu, self.p_max);
        let l = self.env.params().l;
        self.env.set_books(Codebooks {
            bs: BsCodebook {
                entries: vec![v],
                power_levels: vec![self.p_max],
            },
            irs: IrsCodebook {
                bits: 1,
                entries: vec![vec![0.0; l]],
            },
        })
    }
}

impl Mdp for MrtNoIrs {
    fn n_actions(&self) -> usize {
        1
    }

    fn state_len(&self) -> usize {
        self.env.params().state_len()
    }

    fn reset(&mut self) -> Result<Vec<f64>> {
        let s = Mdp::reset(&mut self.env)?;
        self.refresh()?;
        Ok(s)
    }

    fn known_rewards(&self) -> Result<Vec<f64>> {
        Mdp::known_rewards(&self.env)
    }

    fn step(&mut self, action: usize) -> Result<Feedback> {
        let fb = Mdp::step(&mut self.env, action)?;
        self.refresh()?;
        Ok(fb)
    }

    fn done(&self) -> bool {
        Mdp::done(&self.env)
    }

    fn random_action(&mut self) -> usize {
        0
    }
}

/// Maximum-ratio transmission without the IRS, on the evaluation stream of `seed`.
pub fn baseline_no_irs(cfg: &ExperimentConfig, seed: u64) -> Result<EvalStats> {
    let mut env = MrtNoIrs::new(cfg, seed)?;
    evaluate(&mut FixedPolicy(0), &mut env, cfg.eval_episodes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Approach {
    PdsPer,
    Dqn,
    RandomPhase,
    NoIrs,
}

impl Approach {
    pub const ALL: [Approach; 4] = [Approach::PdsPer, Approach::Dqn, Approach::RandomPhase, Approach::NoIrs];

    pub fn name(self) -> &'static str {
        match self {
            Approach::PdsPer => "pds_per",
            Approach::Dqn => "dqn",
            Approach::RandomPhase => "random_phase",
            Approach::NoIrs => "no_irs",
        }
    }
}

impl FromStr for Approach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Approach::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown approach `{s}`")))
    }
}

impl std::fmt::Display for Approach {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Trains (if needed) and evaluates one approach under `seed`.
pub fn run_approach(cfg: &ExperimentConfig, approach: Approach, seed: u64) -> Result<EvalStats> {
    match approach {
        Approach::PdsPer | Approach::Dqn => {
            let mut c = cfg.clone();
            let on = approach == Approach::PdsPer;
            c.agent.use_pds = on;
            c.agent.use_per = on;
            let (_, agent) = train_agent(&c, seed)?;
            evaluate_policy(&c, &mut GreedyPolicy::from_agent(&agent), seed)
        }
        Approach::RandomPhase => baseline_random_phase(cfg, seed),
        Approach::NoIrs => baseline_no_irs(cfg, seed),
    }
}

pub fn eval_csv(cfg: &ExperimentConfig, seed: u64, rows: &[(String, EvalStats)]) -> String {
    let mut s = echo(cfg, seed, &[]);
    let _ = writeln!(s, "{EVAL_HEADER}");
    for (name, e) in rows {
        let _ = writeln!(
            s,
            "{name},{seed},{},{},{},{},{}",
            e.avg_secrecy_rate, e.qos_joint, e.qos_secrecy, e.qos_rate, e.avg_reward
        );
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVar {
    PMaxDbm,
    IrsElements,
    Rho,
}

impl SweepVar {
    pub fn name(self) -> &'static str {
        match self {
            SweepVar::PMaxDbm => "p_max_dbm",
            SweepVar::IrsElements => "irs_elements",
            SweepVar::Rho => "rho",
        }
    }

    /// A copy of `cfg` with this variable set to `value`.
    pub fn apply(self, cfg: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut c = cfg.clone();
        match self {
            SweepVar::PMaxDbm => c.p_max_dbm = value,
            SweepVar::IrsElements => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::config("irs_elements", format!("sweep value {value} is not a positive integer")));
                }
                c.irs_elements = value as usize;
            }
            SweepVar::Rho => {
                c.rho = value;
                c.doppler = None;
            }
        }
        c.validate()?;
        Ok(c)
    }
}

impl FromStr for SweepVar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p_max_dbm" => Ok(SweepVar::PMaxDbm),
            "irs_elements" => Ok(SweepVar::IrsElements),
            "rho" => Ok(SweepVar::Rho),
            _ => Err(Error::invalid(format!(
                "unknown sweep variable `{s}` (expected p_max_dbm, irs_elements or rho)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub var: SweepVar,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub approaches: Vec<Approach>,
}

impl SweepSpec {
    pub fn new(var: SweepVar, values: Vec<f64>, seeds: Vec<u64>) -> Self {
        Self {
            var,
            values,
            seeds,
            approaches: Approach::ALL.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() < 2 {
            return Err(Error::invalid("a sweep needs at least two values"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("a sweep needs at least one seed"));
        }
        if self.approaches.is_empty() {
            return Err(Error::invalid("a sweep needs at least one approach"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub approach: Approach,
    pub value: f64,
    pub seed: u64,
    pub stats: EvalStats,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn run_sweep(cfg: &ExperimentConfig, spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let mut rows = Vec::new();
    for &value in &spec.values {
        let c = spec.var.apply(cfg, value)?;
        for &approach in &spec.approaches {
            for &seed in &spec.seeds {
                let stats = run_approach(&c, approach, seed)?;
                rows.push(SweepRow {
                    approach,
                    value,
                    seed,
                    stats,
                });
            }
        }
    }
    Ok(rows)
}

/// Mean secrecy rate over seeds for one (approach, value) cell.
pub fn cell_mean(rows: &[SweepRow], approach: Approach, value: f64) -> Option<f64> {
    let xs: Vec<f64> = rows
        .iter()
        .filter(|r| r.approach == approach && r.value == value)
        .map(|r| r.stats.avg_secrecy_rate)
        .collect();
    (!xs.is_empty()).then(|| mean_std(&xs).0)
}

pub fn sweep_csv(cfg: &ExperimentConfig, spec: &SweepSpec, rows: &[SweepRow]) -> String {
    let mut c = cfg.clone();
    c.seeds = spec.seeds.clone();
    let values = spec.values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
    let approaches = spec.approaches.iter().map(|a| a.name()).collect::<Vec<_>>().join(",");
    let mut s = echo(
        &c,
        cfg.seed,
        &[
            ("sweep_var", spec.var.name().to_string()),
            ("sweep_values", values),
            ("approaches", approaches),
        ],
    );
    let var = spec.var.name();
    let _ = writeln!(s, "{SWEEP_HEADER}");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{var},{},{},{},{}",
            r.approach, r.value, r.seed, r.stats.avg_secrecy_rate, r.stats.qos_joint
        );
    }
    for &value in &spec.values {
        for &approach in &spec.approaches {
            let cell: Vec<&SweepRow> = rows.iter().filter(|r| r.approach == approach && r.value == value).collect();
            if cell.is_empty() {
                continue;
            }
            let sec: Vec<f64> = cell.iter().map(|r| r.stats.avg_secrecy_rate).collect();
            let qos: Vec<f64> = cell.iter().map(|r| r.stats.qos_joint).collect();
            let (sm, ss) = mean_std(&sec);
            let (qm, qs) = mean_std(&qos);
            let _ = writeln!(s, "{approach},{var},{value},mean,{sm},{qm}");
            let _ = writeln!(s, "{approach},{var},{value},std,{ss},{qs}");
        }
    }
    s
}
