//! Flat `key = value` experiment configuration.
//!
//! Blank lines and `#` comments are ignored; unknown keys are rejected.
//! Every key has a default, so an empty file is a valid configuration.
//! [`ExperimentConfig::to_text`] writes every resolved key back out and
//! parses to the same configuration.
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `bs_antennas` | 4 | N |
//! | `irs_elements` | 10 | L |
//! | `user_positions` | `147:98, 153:102` | one `x:y` (m) per user; sets K |
//! | `eve_positions` | `195:145, 105:145` | one `x:y` (m) per eavesdropper; sets M |
//! | `bs_position` | `0:0` | |
//! | `irs_position` | `150:100` | |
//! | `p_max_dbm` | 30 | BS power budget |
//! | `noise_dbm` | -90 | noise power at users and eavesdroppers |
//! | `pl0_db` | 30 | attenuation at the reference distance |
//! | `d0` | 1 | reference distance (m) |
//! | `exp_bs_mu`, `exp_bs_irs`, `exp_irs_mu` | 3.2, 2.2, 2.2 | path-loss exponents |
//! | `rho` | 0.95 | channel correlation between slots |
//! | `velocity`, `carrier_freq`, `t_delay` | unset | derive `rho` from Doppler instead (all three, and no `rho`) |
//! | `error_bu`, `error_ru`, `error_be`, `error_re` | 0.05 | error radius relative to the RMS norm of that link class |
//! | `secrecy_min`, `rate_min` | 3, 5 | per-user QoS targets (bits/s/Hz) |
//! | `mu1`, `mu2` | 2, 2 | QoS penalty weights |
//! | `bs_directions`, `power_levels` | 4, 2 | BS codebook |
//! | `irs_codebook_size`, `phase_bits`, `codebook_seed` | 16, 2, 7 | IRS codebook |
//! | `gamma`, `learning_rate`, `optimizer` | 0.95, 0.0001, sgd | |
//! | `eps_start`, `eps_end`, `eps_anneal_episodes` | 0.8, 0.1, 150 | |
//! | `batch_size`, `target_sync`, `train_interval` | 32, 200, 1 | |
//! | `use_pds`, `use_per` | true, true | |
//! | `per_eta1`, `per_eta2`, `buffer_capacity` | 0.6, 0.4, 32000 | |
//! | `hidden_layers` | `128,128` | |
//! | `warmup_steps` | 1000 | random steps used to fit the state normalizer |
//! | `episodes`, `horizon`, `eval_episodes` | 200, 100, 100 | |
//! | `seeds` | `1` | seeds used by sweeps |
//! | `seed` | 1 | seed for single runs |
//! | `output` | `results.csv` | |

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::agent::AgentConfig;
use crate::channel::{autocorrelation, path_gain, DopplerParams, ErrorRadii, Geometry, PathLossParams, Point};
use crate::codebook::{build_bs_codebook, build_irs_codebook, Codebooks};
use crate::env::{EnvParams, RewardParams, StepParams};
use crate::error::{Error, Result};
use crate::rates::NoiseParams;

pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// `P_W = 10^((P_dBm - 30) / 10)`.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Doppler {
    pub velocity: f64,
    pub carrier_freq: f64,
    pub t_delay: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub bs_antennas: usize,
    pub irs_elements: usize,
    pub bs_position: Point,
    pub irs_position: Point,
    pub user_positions: Vec<Point>,
    pub eve_positions: Vec<Point>,
    pub p_max_dbm: f64,
    pub noise_dbm: f64,
    pub path_loss: PathLossParams,
    pub rho: f64,
    pub doppler: Option<Doppler>,
    pub error_rel: [f64; 4],
    pub secrecy_min: f64,
    pub rate_min: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub bs_directions: usize,
    pub power_levels: usize,
    pub irs_codebook_size: usize,
    pub phase_bits: u32,
    pub codebook_seed: u64,
    pub agent: AgentConfig,
    pub warmup_steps: usize,
    pub episodes: usize,
    pub horizon: usize,
    pub eval_episodes: usize,
    pub seeds: Vec<u64>,
    pub seed: u64,
    pub output: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            bs_antennas: 4,
            irs_elements: 10,
            bs_position: Point::new(0.0, 0.0),
            irs_position: Point::new(150.0, 100.0),
            user_positions: vec![Point::new(147.0, 98.0), Point::new(153.0, 102.0)],
            eve_positions: vec![Point::new(195.0, 145.0), Point::new(105.0, 145.0)],
            p_max_dbm: 30.0,
            noise_dbm: -90.0,
            path_loss: PathLossParams::default(),
            rho: 0.95,
            doppler: None,
            error_rel: [0.05; 4],
            secrecy_min: 3.0,
            rate_min: 5.0,
            mu1: 2.0,
            mu2: 2.0,
            bs_directions: 4,
            power_levels: 2,
            irs_codebook_size: 16,
            phase_bits: 2,
            codebook_seed: 7,
            agent: AgentConfig {
                lr: 1e-4,
                eps_anneal_episodes: 150,
                ..AgentConfig::default()
            },
            warmup_steps: 1000,
            episodes: 200,
            horizon: 100,
            eval_episodes: 100,
            seeds: vec![1],
            seed: 1,
            output: "results.csv".into(),
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}` as {}", std::any::type_name::<T>())))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::config(key, format!("expected true or false, got `{value}`"))),
    }
}

fn parse_point(key: &str, value: &str) -> Result<Point> {
    let (x, y) = value
        .split_once(':')
        .ok_or_else(|| Error::config(key, format!("expected `x:y`, got `{value}`")))?;
    Ok(Point::new(parse_num(key, x.trim())?, parse_num(key, y.trim())?))
}

fn parse_list<T>(key: &str, value: &str, sep: char, item: impl Fn(&str, &str) -> Result<T>) -> Result<Vec<T>> {
    value
        .split(sep)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| item(key, s))
        .collect()
}

fn fmt_points(ps: &[Point]) -> String {
    ps.iter().map(|p| format!("{}:{}", p.x, p.y)).collect::<Vec<_>>().join(", ")
}

fn fmt_list<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut rho_set = false;
        let mut doppler = [None::<f64>; 3];
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(line, format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "velocity" => doppler[0] = Some(parse_num(key, value)?),
                "carrier_freq" => doppler[1] = Some(parse_num(key, value)?),
                "t_delay" => doppler[2] = Some(parse_num(key, value)?),
                "rho" => {
                    cfg.rho = parse_num(key, value)?;
                    rho_set = true;
                }
                _ => cfg.set(key, value)?,
            }
        }
        match doppler {
            [None, None, None] => {}
            [Some(velocity), Some(carrier_freq), Some(t_delay)] => {
                if rho_set {
                    return Err(Error::config("rho", "give either rho or velocity/carrier_freq/t_delay, not both"));
                }
                let d = Doppler {
                    velocity,
                    carrier_freq,
                    t_delay,
                };
                cfg.rho = autocorrelation(&DopplerParams {
                    velocity,
                    carrier_freq,
                    light_speed: SPEED_OF_LIGHT,
                    t_delay,
                });
                cfg.doppler = Some(d);
            }
            _ => {
                let missing = ["velocity", "carrier_freq", "t_delay"]
                    .iter()
                    .zip(doppler)
                    .find(|(_, v)| v.is_none())
                    .map(|(k, _)| *k)
                    .unwrap_or("velocity");
                return Err(Error::config(missing, "Doppler parameters must be given together"));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key from its textual value. `rho` and the Doppler keys are
    /// handled by [`ExperimentConfig::parse`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let a = &mut self.agent;
        match key {
            "bs_antennas" => self.bs_antennas = parse_num(key, value)?,
            "irs_elements" => self.irs_elements = parse_num(key, value)?,
            "bs_position" => self.bs_position = parse_point(key, value)?,
            "irs_position" => self.irs_position = parse_point(key, value)?,
            "user_positions" => self.user_positions = parse_list(key, value, ',', parse_point)?,
            "eve_positions" => self.eve_positions = parse_list(key, value, ',', parse_point)?,
            "p_max_dbm" => self.p_max_dbm = parse_num(key, value)?,
            "noise_dbm" => self.noise_dbm = parse_num(key, value)?,
            "pl0_db" => self.path_loss.pl0_db = parse_num(key, value)?,
            "d0" => self.path_loss.d0 = parse_num(key, value)?,
            "exp_bs_mu" => self.path_loss.exp_bs_mu = parse_num(key, value)?,
            "exp_bs_irs" => self.path_loss.exp_bs_irs = parse_num(key, value)?,
            "exp_irs_mu" => self.path_loss.exp_irs_mu = parse_num(key, value)?,
            "rho" => {
                self.rho = parse_num(key, value)?;
                self.doppler = None;
            }
            "error_bu" => self.error_rel[0] = parse_num(key, value)?,
            "error_ru" => self.error_rel[1] = parse_num(key, value)?,
            "error_be" => self.error_rel[2] = parse_num(key, value)?,
            "error_re" => self.error_rel[3] = parse_num(key, value)?,
            "secrecy_min" => self.secrecy_min = parse_num(key, value)?,
            "rate_min" => self.rate_min = parse_num(key, value)?,
            "mu1" => self.mu1 = parse_num(key, value)?,
            "mu2" => self.mu2 = parse_num(key, value)?,
            "bs_directions" => self.bs_directions = parse_num(key, value)?,
            "power_levels" => self.power_levels = parse_num(key, value)?,
            "irs_codebook_size" => self.irs_codebook_size = parse_num(key, value)?,
            "phase_bits" => self.phase_bits = parse_num(key, value)?,
            "codebook_seed" => self.codebook_seed = parse_num(key, value)?,
            "gamma" => a.gamma = parse_num(key, value)?,
            "learning_rate" => a.lr = parse_num(key, value)?,
            "optimizer" => {
                a.optimizer = value
                    .parse()
                    .map_err(|_| Error::config(key, format!("expected sgd, momentum or adam, got `{value}`")))?
            }
            "eps_start" => a.eps_start = parse_num(key, value)?,
            "eps_end" => a.eps_end = parse_num(key, value)?,
            "eps_anneal_episodes" => a.eps_anneal_episodes = parse_num(key, value)?,
            "batch_size" => a.batch_size = parse_num(key, value)?,
            "target_sync" => a.target_sync = parse_num(key, value)?,
            "train_interval" => a.train_interval = parse_num(key, value)?,
            "use_pds" => a.use_pds = parse_bool(key, value)?,
            "use_per" => a.use_per = parse_bool(key, value)?,
            "per_eta1" => a.eta1 = parse_num(key, value)?,
            "per_eta2" => a.eta2 = parse_num(key, value)?,
            "buffer_capacity" => a.buffer_capacity = parse_num(key, value)?,
            "hidden_layers" => a.hidden = parse_list(key, value, ',', parse_num)?,
            "warmup_steps" => self.warmup_steps = parse_num(key, value)?,
            "episodes" => self.episodes = parse_num(key, value)?,
            "horizon" => self.horizon = parse_num(key, value)?,
            "eval_episodes" => self.eval_episodes = parse_num(key, value)?,
            "seeds" => self.seeds = parse_list(key, value, ',', parse_num)?,
            "seed" => self.seed = parse_num(key, value)?,
            "output" => self.output = value.to_string(),
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("bs_antennas", self.bs_antennas),
            ("irs_elements", self.irs_elements),
            ("user_positions", self.user_positions.len()),
            ("eve_positions", self.eve_positions.len()),
            ("bs_directions", self.bs_directions),
            ("power_levels", self.power_levels),
            ("irs_codebook_size", self.irs_codebook_size),
            ("horizon", self.horizon),
        ] {
            if v == 0 {
                return Err(Error::config(key, "must be >= 1"));
            }
        }
        if self.bs_directions < self.user_positions.len() {
            return Err(Error::config("bs_directions", "must be at least the number of users"));
        }
        for (key, v) in [("p_max_dbm", self.p_max_dbm), ("noise_dbm", self.noise_dbm)] {
            if !v.is_finite() {
                return Err(Error::config(key, "must be finite"));
            }
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::config("rho", format!("must lie in [0, 1], got {}", self.rho)));
        }
        if let Some(d) = self.doppler {
            if !(d.velocity >= 0.0 && d.carrier_freq > 0.0 && d.t_delay >= 0.0) {
                return Err(Error::config("velocity", "Doppler parameters must be non-negative"));
            }
        }
        let plp = &self.path_loss;
        if !(plp.d0 > 0.0) {
            return Err(Error::config("d0", "must be positive"));
        }
        for (key, v) in [
            ("exp_bs_mu", plp.exp_bs_mu),
            ("exp_bs_irs", plp.exp_bs_irs),
            ("exp_irs_mu", plp.exp_irs_mu),
        ] {
            if !(v > 0.0) {
                return Err(Error::config(key, "must be positive"));
            }
        }
        for (key, v) in ["error_bu", "error_ru", "error_be", "error_re"].iter().zip(self.error_rel) {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(*key, "must be >= 0"));
            }
        }
        for (key, v) in [
            ("secrecy_min", self.secrecy_min),
            ("rate_min", self.rate_min),
            ("mu1", self.mu1),
            ("mu2", self.mu2),
        ] {
            if !(v >= 0.0) {
                return Err(Error::config(key, "must be >= 0"));
            }
        }
        if self.phase_bits == 0 || self.phase_bits > 16 {
            return Err(Error::config("phase_bits", "must be 1..=16"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "need at least one seed"));
        }
        self.geometry()
            .validate()
            .map_err(|e| Error::config("user_positions", e.to_string()))?;
        self.agent.validate()
    }

    pub fn k(&self) -> usize {
        self.user_positions.len()
    }

    pub fn m(&self) -> usize {
        self.eve_positions.len()
    }

    pub fn p_max_w(&self) -> f64 {
        dbm_to_watts(self.p_max_dbm)
    }

    pub fn noise_w(&self) -> f64 {
        dbm_to_watts(self.noise_dbm)
    }

    pub fn geometry(&self) -> Geometry {
        Geometry {
            bs: self.bs_position,
            irs: self.irs_position,
            users: self.user_positions.clone(),
            eves: self.eve_positions.clone(),
        }
    }

    /// Absolute error radii: each relative radius times the RMS norm
    /// `sqrt(dim * mean path gain)` of its link class.
    pub fn error_radii(&self) -> Result<ErrorRadii> {
        let g = self.geometry();
        let plp = &self.path_loss;
        let mean_gain = |from: Point, to: &[Point], exp: f64| -> Result<f64> {
            let gains = to.iter().map(|p| path_gain(from.distance(p), exp, plp)).collect::<Result<Vec<_>>>()?;
            Ok(gains.iter().sum::<f64>() / gains.len() as f64)
        };
        let n = self.bs_antennas as f64;
        let l = self.irs_elements as f64;
        let [bu, ru, be, re] = self.error_rel;
        Ok(ErrorRadii {
            bu: bu * (n * mean_gain(g.bs, &g.users, plp.exp_bs_mu)?).sqrt(),
            ru: ru * (l * mean_gain(g.irs, &g.users, plp.exp_irs_mu)?).sqrt(),
            be: be * (n * mean_gain(g.bs, &g.eves, plp.exp_bs_mu)?).sqrt(),
            re: re * (l * mean_gain(g.irs, &g.eves, plp.exp_irs_mu)?).sqrt(),
        })
    }

    pub fn env_params(&self) -> Result<EnvParams> {
        let (k, m) = (self.k(), self.m());
        Ok(EnvParams {
            n: self.bs_antennas,
            l: self.irs_elements,
            geometry: self.geometry(),
            path_loss: self.path_loss,
            step: StepParams {
                rho: self.rho,
                radii: self.error_radii()?,
                reward: RewardParams {
                    mu1: self.mu1,
                    mu2: self.mu2,
                    secrecy_min: vec![self.secrecy_min; k],
                    rate_min: vec![self.rate_min; k],
                },
                noise: NoiseParams::uniform(self.noise_w(), k, m),
            },
            horizon: self.horizon,
            disable_irs: false,
        })
    }

    pub fn codebooks(&self) -> Result<Codebooks> {
        Ok(Codebooks {
            bs: build_bs_codebook(
                self.bs_antennas,
                self.k(),
                self.p_max_w(),
                self.bs_directions,
                self.power_levels,
            )?,
            irs: build_irs_codebook(self.irs_elements, self.phase_bits, self.irs_codebook_size, self.codebook_seed)?,
        })
    }

    /// Every resolved key, one `key = value` per line, in a fixed order.
    pub fn to_text(&self) -> String {
        let a = &self.agent;
        let plp = &self.path_loss;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("bs_antennas", self.bs_antennas.to_string());
        kv("irs_elements", self.irs_elements.to_string());
        kv("bs_position", fmt_points(&[self.bs_position]));
        kv("irs_position", fmt_points(&[self.irs_position]));
        kv("user_positions", fmt_points(&self.user_positions));
        kv("eve_positions", fmt_points(&self.eve_positions));
        kv("p_max_dbm", self.p_max_dbm.to_string());
        kv("noise_dbm", self.noise_dbm.to_string());
        kv("pl0_db", plp.pl0_db.to_string());
        kv("d0", plp.d0.to_string());
        kv("exp_bs_mu", plp.exp_bs_mu.to_string());
        kv("exp_bs_irs", plp.exp_bs_irs.to_string());
        kv("exp_irs_mu", plp.exp_irs_mu.to_string());
        match self.doppler {
            Some(d) => {
                kv("velocity", d.velocity.to_string());
                kv("carrier_freq", d.carrier_freq.to_string());
                kv("t_delay", d.t_delay.to_string());
            }
            None => kv("rho", self.rho.to_string()),
        }
        for (key, v) in ["error_bu", "error_ru", "error_be", "error_re"].iter().zip(self.error_rel) {
            kv(key, v.to_string());
        }
        kv("secrecy_min", self.secrecy_min.to_string());
        kv("rate_min", self.rate_min.to_string());
        kv("mu1", self.mu1.to_string());
        kv("mu2", self.mu2.to_string());
        kv("bs_directions", self.bs_directions.to_string());
        kv("power_levels", self.power_levels.to_string());
        kv("irs_codebook_size", self.irs_codebook_size.to_string());
        kv("phase_bits", self.phase_bits.to_string());
        kv("codebook_seed", self.codebook_seed.to_string());
        kv("gamma", a.gamma.to_string());
        kv("learning_rate", a.lr.to_string());
        kv("optimizer", a.optimizer.to_string());
        kv("eps_start", a.eps_start.to_string());
        kv("eps_end", a.eps_end.to_string());
        kv("eps_anneal_episodes", a.eps_anneal_episodes.to_string());
        kv("batch_size", a.batch_size.to_string());
        kv("target_sync", a.target_sync.to_string());
        kv("train_interval", a.train_interval.to_string());
        kv("use_pds", a.use_pds.to_string());
        kv("use_per", a.use_per.to_string());
        kv("per_eta1", a.eta1.to_string());
        kv("per_eta2", a.eta2.to_string());
        kv("buffer_capacity", a.buffer_capacity.to_string());
        kv("hidden_layers", fmt_list(&a.hidden));
        kv("warmup_steps", self.warmup_steps.to_string());
        kv("episodes", self.episodes.to_string());
        kv("horizon", self.horizon.to_string());
        kv("eval_episodes", self.eval_episodes.to_string());
        kv("seeds", fmt_list(&self.seeds));
        kv("seed", self.seed.to_string());
        kv("output", self.output.clone());
        s
    }
}
