//! The secure-beamforming MDP.
//!
//! A step splits into a known part (the chosen beamformer evaluated on the
//! currently estimated channels, deterministic given state and action) and
//! an unknown part (channel ageing plus estimation error). The post-decision
//! state sits between the two.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{apply_error, evolve, sample_initial, ChannelSet, ErrorRadii, Geometry, PathLossParams};
use crate::codebook::Codebooks;
use crate::error::{Error, Result};
use crate::numerics::Complex;
use crate::rates::{EffectiveChannels, NoiseParams, RateReport};

#[derive(Debug, Clone, PartialEq)]
pub struct RewardParams {
    pub mu1: f64,
    pub mu2: f64,
    pub secrecy_min: Vec<f64>,
    pub rate_min: Vec<f64>,
}

/// QoS-aware reward: total secrecy rate minus `mu1` per user below its
/// secrecy target and `mu2` per user below its rate target.
pub fn reward(secrecy: &[f64], rates: &[f64], rp: &RewardParams) -> f64 {
    let mut r: f64 = secrecy.iter().sum();
    for (k, (&s, &u)) in secrecy.iter().zip(rates).enumerate() {
        if s < rp.secrecy_min[k] {
            r -= rp.mu1;
        }
        if u < rp.rate_min[k] {
            r -= rp.mu2;
        }
    }
    r
}

/// Per-user flag: 0 when neither target is met, 1/2 for one, 1 for both.
pub fn qos_flags(secrecy: &[f64], rates: &[f64], rp: &RewardParams) -> Vec<f64> {
    secrecy
        .iter()
        .zip(rates)
        .enumerate()
        .map(|(k, (&s, &u))| {
            let met = u8::from(s >= rp.secrecy_min[k]) + u8::from(u >= rp.rate_min[k]);
            f64::from(met) / 2.0
        })
        .collect()
}

/// Fractions of users meeting the secrecy target, the rate target, and both.
pub fn qos_satisfaction(secrecy: &[f64], rates: &[f64], rp: &RewardParams) -> (f64, f64, f64) {
    if secrecy.is_empty() {
        return (1.0, 1.0, 1.0);
    }
    let k = secrecy.len() as f64;
    let mut sec = 0usize;
    let mut rate = 0usize;
    let mut both = 0usize;
    for (i, (&s, &u)) in secrecy.iter().zip(rates).enumerate() {
        let a = s >= rp.secrecy_min[i];
        let b = u >= rp.rate_min[i];
        sec += usize::from(a);
        rate += usize::from(b);
        both += usize::from(a && b);
    }
    (sec as f64 / k, rate as f64 / k, both as f64 / k)
}

/// Raw (unnormalized) observation vector.
///
/// Layout: real/imag interleaved entries of `H_br` (row-major), then every
/// `h_bu`, `h_ru`, `h_be`, `h_re` in index order, then K previous secrecy
/// rates, K previous data rates and K QoS flags.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub features: Vec<f64>,
    k: usize,
}

impl EnvState {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn channel_features(&self) -> &[f64] {
        &self.features[..self.features.len() - 3 * self.k]
    }

    pub fn prev_secrecy(&self) -> &[f64] {
        let n = self.features.len();
        &self.features[n - 3 * self.k..n - 2 * self.k]
    }

    pub fn prev_rate(&self) -> &[f64] {
        let n = self.features.len();
        &self.features[n - 2 * self.k..n - self.k]
    }

    pub fn qos_flags(&self) -> &[f64] {
        &self.features[self.features.len() - self.k..]
    }
}

pub fn state_len(n: usize, k: usize, m: usize, l: usize) -> usize {
    2 * (l * n + k * n + k * l + m * n + m * l) + 3 * k
}

fn push_complex(out: &mut Vec<f64>, zs: &[Complex]) {
    for z in zs {
        out.push(z.re);
        out.push(z.im);
    }
}

pub fn assemble_state(ch: &ChannelSet, prev_secrecy: &[f64], prev_rate: &[f64], qos: &[f64]) -> Result<EnvState> {
    let d = ch.dims();
    if prev_secrecy.len() != d.k || prev_rate.len() != d.k || qos.len() != d.k {
        return Err(Error::invalid("history vectors must have one entry per user"));
    }
    let mut f = Vec::with_capacity(state_len(d.n, d.k, d.m, d.l));
    push_complex(&mut f, ch.h_br.data());
    for v in ch.h_bu.iter().chain(&ch.h_ru).chain(&ch.h_be).chain(&ch.h_re) {
        push_complex(&mut f, v);
    }
    f.extend_from_slice(prev_secrecy);
    f.extend_from_slice(prev_rate);
    f.extend_from_slice(qos);
    Ok(EnvState { features: f, k: d.k })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub pds_state: EnvState,
    pub next_state: EnvState,
    pub r_known: f64,
    pub r_unknown: f64,
    /// Always `r_known + r_unknown`.
    pub r_total: f64,
    pub per_user_secrecy: Vec<f64>,
    pub per_user_rate: Vec<f64>,
    pub next_channels: ChannelSet,
}

/// Everything a step needs besides the channels and the action.
#[derive(Debug, Clone, PartialEq)]
pub struct StepParams {
    pub rho: f64,
    pub radii: ErrorRadii,
    pub reward: RewardParams,
    pub noise: NoiseParams,
}

/// One MDP transition from estimated channels `ch_est` under joint action `action`.
pub fn step<R: Rng + ?Sized>(
    ch_est: &ChannelSet,
    books: &Codebooks,
    action: usize,
    sp: &StepParams,
    rng: &mut R,
) -> Result<StepOutcome> {
    let bf = crate::codebook::decode_action(action, books)?;

    let known = RateReport::compute(ch_est, &bf, &sp.noise)?;
    let r_known = reward(&known.secrecy, &known.user, &sp.reward);
    let pds_state = assemble_state(
        ch_est,
        &known.secrecy,
        &known.user,
        &qos_flags(&known.secrecy, &known.user, &sp.reward),
    )?;

    let aged = evolve(ch_est, sp.rho, rng)?;
    let next_channels = apply_error(&aged, &sp.radii, rng);
    let realized = RateReport::compute(&next_channels, &bf, &sp.noise)?;
    let r_realized = reward(&realized.secrecy, &realized.user, &sp.reward);
    let r_unknown = r_realized - r_known;
    let r_total = r_known + r_unknown;
    let next_state = assemble_state(
        &next_channels,
        &realized.secrecy,
        &realized.user,
        &qos_flags(&realized.secrecy, &realized.user, &sp.reward),
    )?;

    Ok(StepOutcome {
        pds_state,
        next_state,
        r_known,
        r_unknown,
        r_total,
        per_user_secrecy: realized.secrecy,
        per_user_rate: realized.user,
        next_channels,
    })
}

/// Known reward of every joint action on channels `ch`.
///
/// Effective channels are computed once per IRS pattern and shared by all
/// BS precoders.
pub fn known_rewards(ch: &ChannelSet, books: &Codebooks, noise: &NoiseParams, rp: &RewardParams) -> Result<Vec<f64>> {
    let n_irs = books.irs.len();
    let mut out = vec![0.0; books.len()];
    for (j, theta) in books.irs.entries.iter().enumerate() {
        let eff = EffectiveChannels::new(ch, theta)?;
        for (b, v) in books.bs.entries.iter().enumerate() {
            let rep = RateReport::from_effective(&eff, v, noise);
            out[b * n_irs + j] = reward(&rep.secrecy, &rep.user, rp);
        }
    }
    Ok(out)
}

/// Static description of one simulated system.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvParams {
    pub n: usize,
    pub l: usize,
    pub geometry: Geometry,
    pub path_loss: PathLossParams,
    pub step: StepParams,
    pub horizon: usize,
    /// Zero the reflected path (no-IRS system).
    pub disable_irs: bool,
}

impl EnvParams {
    pub fn k(&self) -> usize {
        self.geometry.users.len()
    }

    pub fn m(&self) -> usize {
        self.geometry.eves.len()
    }

    pub fn state_len(&self) -> usize {
        state_len(self.n, self.k(), self.m(), self.l)
    }
}

/// An episodic environment instance with its own RNG stream.
#[derive(Debug, Clone)]
pub struct Environment {
    params: EnvParams,
    books: Codebooks,
    channels: ChannelSet,
    prev_secrecy: Vec<f64>,
    prev_rate: Vec<f64>,
    prev_flags: Vec<f64>,
    t: usize,
    rng: ChaCha8Rng,
}

impl Environment {
    pub fn new(params: EnvParams, books: Codebooks, seed: u64) -> Result<Self> {
        if params.horizon == 0 {
            return Err(Error::invalid("episode horizon must be >= 1"));
        }
        if !(0.0..=1.0).contains(&params.step.rho) {
            return Err(Error::invalid(format!("rho must lie in [0, 1], got {}", params.step.rho)));
        }
        let k = params.k();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let channels = Self::draw(&params, &mut rng)?;
        Ok(Self {
            params,
            books,
            channels,
            prev_secrecy: vec![0.0; k],
            prev_rate: vec![0.0; k],
            prev_flags: vec![0.0; k],
            t: 0,
            rng,
        })
    }

    fn draw(params: &EnvParams, rng: &mut ChaCha8Rng) -> Result<ChannelSet> {
        let ch = sample_initial(&params.geometry, params.n, params.l, &params.path_loss, rng)?;
        Ok(if params.disable_irs { ch.without_irs() } else { ch })
    }

    pub fn params(&self) -> &EnvParams {
        &self.params
    }

    pub fn books(&self) -> &Codebooks {
        &self.books
    }

    pub fn n_actions(&self) -> usize {
        self.books.len()
    }

    /// Replaces the action codebooks, e.g. with a precoder recomputed from
    /// the current channels.
    pub fn set_books(&mut self, books: Codebooks) -> Result<()> {
        if books.is_empty() || books.bs.entries[0].rows() != self.params.n || books.irs.entries[0].len() != self.params.l {
            return Err(Error::invalid("codebook dimensions do not match the environment"));
        }
        self.books = books;
        Ok(())
    }

    pub fn channels(&self) -> &ChannelSet {
        &self.channels
    }

    /// Starts a new episode with freshly drawn channels and empty history.
    pub fn reset(&mut self) -> Result<EnvState> {
        self.channels = Self::draw(&self.params, &mut self.rng)?;
        self.prev_secrecy.iter_mut().for_each(|x| *x = 0.0);
        self.prev_rate.iter_mut().for_each(|x| *x = 0.0);
        self.prev_flags.iter_mut().for_each(|x| *x = 0.0);
        self.t = 0;
        self.observe()
    }

    pub fn observe(&self) -> Result<EnvState> {
        assemble_state(&self.channels, &self.prev_secrecy, &self.prev_rate, &self.prev_flags)
    }

    pub fn known_rewards(&self) -> Result<Vec<f64>> {
        known_rewards(&self.channels, &self.books, &self.params.step.noise, &self.params.step.reward)
    }

    pub fn done(&self) -> bool {
        self.t >= self.params.horizon
    }

    pub fn step(&mut self, action: usize) -> Result<StepOutcome> {
        let out = step(&self.channels, &self.books, action, &self.params.step, &mut self.rng)?;
        self.channels = out.next_channels.clone();
        self.prev_secrecy.clone_from(&out.per_user_secrecy);
        self.prev_rate.clone_from(&out.per_user_rate);
        self.prev_flags = qos_flags(&out.per_user_secrecy, &out.per_user_rate, &self.params.step.reward);
        self.t += 1;
        Ok(out)
    }

    /// Draws a uniform action from this environment's own stream.
    pub fn random_action(&mut self) -> usize {
        self.rng.random_range(0..self.books.len())
    }
}

/// What one transition reports back to a learner.
#[derive(Debug, Clone, PartialEq)]
pub struct Feedback {
    pub pds_state: Vec<f64>,
    pub next_state: Vec<f64>,
    pub r_known: f64,
    pub r_unknown: f64,
    pub r_total: f64,
    /// Reward recomputed independently of the split, for consistency checks.
    pub r_realized: f64,
    /// Realized secrecy rate averaged over users (0 for non-wireless MDPs).
    pub mean_secrecy: f64,
    /// (secrecy, rate, joint) QoS satisfaction fractions.
    pub qos: (f64, f64, f64),
}

/// An episodic MDP with a known/unknown transition split.
pub trait Mdp {
    fn n_actions(&self) -> usize;
    fn state_len(&self) -> usize;
    /// Starts an episode and returns the raw observation.
    fn reset(&mut self) -> Result<Vec<f64>>;
    /// Known reward of every action at the current state.
    fn known_rewards(&self) -> Result<Vec<f64>>;
    fn step(&mut self, action: usize) -> Result<Feedback>;
    fn done(&self) -> bool;
    /// Uniform action from the environment's own stream.
    fn random_action(&mut self) -> usize;
}

impl Mdp for Environment {
    fn n_actions(&self) -> usize {
        self.books.len()
    }

    fn state_len(&self) -> usize {
        self.params.state_len()
    }

    fn reset(&mut self) -> Result<Vec<f64>> {
        Environment::reset(self).map(|s| s.features)
    }

    fn known_rewards(&self) -> Result<Vec<f64>> {
        Environment::known_rewards(self)
    }

    fn step(&mut self, action: usize) -> Result<Feedback> {
        let out = Environment::step(self, action)?;
        let rp = &self.params.step.reward;
        let r_realized = reward(&out.per_user_secrecy, &out.per_user_rate, rp);
        let qos = qos_satisfaction(&out.per_user_secrecy, &out.per_user_rate, rp);
        let k = out.per_user_secrecy.len().max(1) as f64;
        Ok(Feedback {
            mean_secrecy: out.per_user_secrecy.iter().sum::<f64>() / k,
            qos,
            r_known: out.r_known,
            r_unknown: out.r_unknown,
            r_total: out.r_total,
            r_realized,
            pds_state: out.pds_state.features,
            next_state: out.next_state.features,
        })
    }

    fn done(&self) -> bool {
        Environment::done(self)
    }

    fn random_action(&mut self) -> usize {
        Environment::random_action(self)
    }
}

/// Frozen per-feature affine scaling `(x - mean) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalizer {
    pub fn identity(len: usize) -> Self {
        Self {
            mean: vec![0.0; len],
            scale: vec![1.0; len],
        }
    }

    /// Fits mean and standard deviation over `steps` random-action steps
    /// (observed states and post-decision states) of a dedicated environment.
    pub fn warm_up(params: &EnvParams, books: &Codebooks, steps: usize, seed: u64) -> Result<Self> {
        let len = params.state_len();
        if steps == 0 {
            return Ok(Self::identity(len));
        }
        let mut env = Environment::new(params.clone(), books.clone(), seed)?;
        let mut sum = vec![0.0; len];
        let mut sum_sq = vec![0.0; len];
        let mut count = 0.0;
        let mut add = |x: &[f64]| {
            for ((s, q), v) in sum.iter_mut().zip(sum_sq.iter_mut()).zip(x) {
                *s += v;
                *q += v * v;
            }
            count += 1.0;
        };
        let mut s = env.reset()?;
        for _ in 0..steps {
            if env.done() {
                s = env.reset()?;
            }
            let a = env.random_action();
            let out = env.step(a)?;
            add(&s.features);
            add(&out.pds_state.features);
            s = out.next_state;
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
        let scale = sum_sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let var = (q / count - m * m).max(0.0);
                let sd = var.sqrt();
                if sd > 0.0 && sd > 1e-9 * m.abs() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{Dims, Point};
    use crate::codebook::{build_bs_codebook, build_irs_codebook};

    fn rp(k: usize) -> RewardParams {
        RewardParams {
            mu1: 2.0,
            mu2: 2.0,
            secrecy_min: vec![3.0; k],
            rate_min: vec![5.0; k],
        }
    }

    #[test]
    fn reward_without_penalties() {
        let r = reward(&[4.0, 3.5], &[6.0, 7.0], &rp(2));
        assert_eq!(r, 7.5);
    }

    #[test]
    fn reward_with_both_penalties() {
        assert_eq!(reward(&[2.0], &[4.0], &rp(1)), -2.0);
    }

    #[test]
    fn reward_boundary_is_not_penalised() {
        assert_eq!(reward(&[3.0], &[5.0], &rp(1)), 3.0);
    }

    #[test]
    fn qos_cases() {
        let p = rp(2);
        assert_eq!(qos_satisfaction(&[4.0, 4.0], &[6.0, 6.0], &p), (1.0, 1.0, 1.0));
        assert_eq!(qos_satisfaction(&[4.0, 1.0], &[6.0, 6.0], &p), (0.5, 1.0, 0.5));
        assert_eq!(qos_satisfaction(&[0.0, 1.0], &[0.0, 0.0], &p), (0.0, 0.0, 0.0));
        assert_eq!(qos_flags(&[4.0, 1.0], &[6.0, 1.0], &p), vec![1.0, 0.0]);
        assert_eq!(qos_flags(&[1.0], &[6.0], &rp(1)), vec![0.5]);
    }

    #[test]
    fn state_length_and_zero_state() {
        assert_eq!(state_len(4, 2, 2, 10), 198);
        let ch = ChannelSet::zeros(Dims { n: 4, k: 2, m: 2, l: 10 });
        let s = assemble_state(&ch, &[0.0; 2], &[0.0; 2], &[0.0; 2]).unwrap();
        assert_eq!(s.len(), 198);
        assert!(s.features.iter().all(|&x| x == 0.0));
        assert!(assemble_state(&ch, &[0.0; 3], &[0.0; 2], &[0.0; 2]).is_err());
    }

    #[test]
    fn state_layout_accessors() {
        let mut ch = ChannelSet::zeros(Dims { n: 1, k: 2, m: 1, l: 1 });
        ch.h_br[(0, 0)] = Complex::new(1.0, 2.0);
        ch.h_bu[1][0] = Complex::new(3.0, 4.0);
        let s = assemble_state(&ch, &[5.0, 6.0], &[7.0, 8.0], &[0.5, 1.0]).unwrap();
        assert_eq!(&s.channel_features()[..2], &[1.0, 2.0]);
        assert_eq!(&s.channel_features()[4..6], &[3.0, 4.0]);
        assert_eq!(s.prev_secrecy(), &[5.0, 6.0]);
        assert_eq!(s.prev_rate(), &[7.0, 8.0]);
        assert_eq!(s.qos_flags(), &[0.5, 1.0]);
    }

    #[test]
    fn swapping_users_swaps_feature_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let geom = Geometry {
            bs: Point::new(0.0, 0.0),
            irs: Point::new(50.0, 20.0),
            users: vec![Point::new(60.0, 0.0), Point::new(40.0, 10.0)],
            eves: vec![Point::new(30.0, -5.0)],
        };
        let ch = sample_initial(&geom, 2, 3, &PathLossParams::default(), &mut rng).unwrap();
        let mut swapped = ch.clone();
        swapped.h_bu.swap(0, 1);
        swapped.h_ru.swap(0, 1);
        let a = assemble_state(&ch, &[1.0, 2.0], &[3.0, 4.0], &[0.0, 1.0]).unwrap();
        let b = assemble_state(&swapped, &[2.0, 1.0], &[4.0, 3.0], &[1.0, 0.0]).unwrap();
        let (n, l) = (2, 3);
        let br = 2 * l * n;
        // H_br and eavesdropper blocks untouched
        assert_eq!(a.features[..br], b.features[..br]);
        let bu = br;
        assert_eq!(a.features[bu..bu + 2 * n], b.features[bu + 2 * n..bu + 4 * n]);
        let ru = bu + 4 * n;
        assert_eq!(a.features[ru..ru + 2 * l], b.features[ru + 2 * l..ru + 4 * l]);
        let eve = ru + 4 * l;
        let hist = a.len() - 6;
        assert_eq!(a.features[eve..hist], b.features[eve..hist]);
    }

    fn small_env(rho: f64, radii: ErrorRadii) -> (EnvParams, Codebooks) {
        let geometry = Geometry {
            bs: Point::new(0.0, 0.0),
            irs: Point::new(150.0, 100.0),
            users: vec![Point::new(160.0, 90.0), Point::new(140.0, 95.0)],
            eves: vec![Point::new(130.0, 70.0)],
        };
        let params = EnvParams {
            n: 4,
            l: 4,
            geometry,
            path_loss: PathLossParams::default(),
            step: StepParams {
                rho,
                radii,
                reward: rp(2),
                noise: NoiseParams::uniform(1e-12, 2, 1),
            },
            horizon: 5,
            disable_irs: false,
        };
        let books = Codebooks {
            bs: build_bs_codebook(4, 2, 1.0, 4, 2).unwrap(),
            irs: build_irs_codebook(4, 2, 4, 1).unwrap(),
        };
        (params, books)
    }

    #[test]
    fn stationary_step_has_no_unknown_part() {
        let (params, books) = small_env(1.0, ErrorRadii::ZERO);
        let mut env = Environment::new(params, books, 3).unwrap();
        let s = env.reset().unwrap();
        let out = env.step(5).unwrap();
        assert_eq!(out.r_unknown, 0.0);
        assert_eq!(out.r_total, out.r_known);
        assert_eq!(out.next_state.channel_features(), out.pds_state.channel_features());
        assert_eq!(out.pds_state.channel_features(), s.channel_features());
        let again = env.step(5).unwrap();
        assert_eq!(again.r_total, out.r_total);
    }

    #[test]
    fn step_is_reproducible_from_seed() {
        let (params, books) = small_env(0.7, ErrorRadii::ZERO);
        let env = Environment::new(params, books, 9).unwrap();
        let sp = env.params().step.clone();
        let a = step(env.channels(), env.books(), 7, &sp, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = step(env.channels(), env.books(), 7, &sp, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        assert!(step(env.channels(), env.books(), 10_000, &sp, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn known_rewards_match_step() {
        let (params, books) = small_env(0.5, ErrorRadii::ZERO);
        let env = Environment::new(params, books, 4).unwrap();
        let all = env.known_rewards().unwrap();
        assert_eq!(all.len(), env.n_actions());
        let sp = env.params().step.clone();
        for a in [0, 3, 17, env.n_actions() - 1] {
            let out = step(env.channels(), env.books(), a, &sp, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            assert_eq!(out.r_known, all[a]);
        }
    }

    #[test]
    fn episode_horizon() {
        let (params, books) = small_env(0.9, ErrorRadii::ZERO);
        let mut env = Environment::new(params, books, 4).unwrap();
        env.reset().unwrap();
        for _ in 0..5 {
            assert!(!env.done());
            env.step(0).unwrap();
        }
        assert!(env.done());
        env.reset().unwrap();
        assert!(!env.done());
    }

    #[test]
    fn normalizer_centres_features() {
        let (params, books) = small_env(0.9, ErrorRadii::ZERO);
        let norm = Normalizer::warm_up(&params, &books, 200, 5).unwrap();
        assert_eq!(norm.mean.len(), params.state_len());
        assert!(norm.scale.iter().all(|s| *s > 0.0 && s.is_finite()));
        let id = Normalizer::identity(3);
        assert_eq!(id.apply(&[1.0, -2.0, 0.5]), vec![1.0, -2.0, 0.5]);
    }
}
