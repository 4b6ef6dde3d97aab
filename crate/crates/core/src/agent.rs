//! Deep post-decision-state Q-learning with prioritized replay.
//!
//! In PDS mode the network output for action `a` at observed state `s`
//! estimates the post-decision value `Q~(s~(s, a), a)`. The post-decision
//! state is a deterministic function of `(s, a)`, so one forward pass on `s`
//! yields it for every action. The action value is recovered as
//!
//! ```text
//! Q^(s, a) = r_known(s, a) + Q~(s~(s, a), a)
//! ```
//!
//! and the network is regressed onto `r_unknown + gamma * max_a' Q^(s', a')`.
//! With PDS and PER both disabled the agent is a classical DQN.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{Feedback, Mdp, Normalizer};
use crate::error::{Error, Result};
use crate::nn::{Batch, Checkpoint, Mlp, Optimizer, OptimizerKind};
use crate::replay::{PrioritizedReplay, Transition};

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub gamma: f64,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_anneal_episodes: usize,
    pub batch_size: usize,
    /// Updates between target-network syncs; 0 bootstraps from the online network.
    pub target_sync: usize,
    pub use_pds: bool,
    pub use_per: bool,
    pub eta1: f64,
    pub eta2: f64,
    pub buffer_capacity: usize,
    pub hidden: Vec<usize>,
    /// Environment steps between gradient updates.
    pub train_interval: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            lr: 0.001,
            optimizer: OptimizerKind::Sgd,
            eps_start: 0.8,
            eps_end: 0.1,
            eps_anneal_episodes: 100,
            batch_size: 32,
            target_sync: 200,
            use_pds: true,
            use_per: true,
            eta1: 0.6,
            eta2: 0.4,
            buffer_capacity: 32_000,
            hidden: vec![128, 128],
            train_interval: 1,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config("gamma", format!("must lie in (0, 1], got {}", self.gamma)));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        for (key, v) in [("eps_start", self.eps_start), ("eps_end", self.eps_end)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(key, format!("must lie in [0, 1], got {v}")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::config("buffer_capacity", "must be >= 1"));
        }
        if self.train_interval == 0 {
            return Err(Error::config("train_interval", "must be >= 1"));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::config("hidden_layers", "layer widths must be >= 1"));
        }
        if !(self.eta1 >= 0.0) || !(self.eta2 >= 0.0) {
            return Err(Error::config("per_eta1", "PER exponents must be >= 0"));
        }
        Ok(())
    }

    /// Linear anneal from `eps_start` to `eps_end`, constant afterwards.
    pub fn epsilon(&self, episode: usize) -> f64 {
        if self.eps_anneal_episodes == 0 {
            return self.eps_end;
        }
        let frac = (episode as f64 / self.eps_anneal_episodes as f64).min(1.0);
        self.eps_start + (self.eps_end - self.eps_start) * frac
    }
}

/// Action values used for decisions: network output plus, in PDS mode, the
/// known reward of each action.
pub fn q_hat(net: &Mlp, state: &[f64], known: Option<&[f64]>) -> Result<Vec<f64>> {
    let mut q = net.forward(state)?;
    if let Some(k) = known {
        if k.len() != q.len() {
            return Err(Error::invalid("known reward vector does not match action count"));
        }
        q.iter_mut().zip(k).for_each(|(v, r)| *v += r);
    }
    Ok(q)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Epsilon-greedy choice over precomputed action values.
pub fn select_action<R: Rng + ?Sized>(q: &[f64], epsilon: f64, rng: &mut R) -> usize {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        rng.random_range(0..q.len())
    } else {
        argmax(q)
    }
}

/// Bootstrapped target and TD error for one stored transition.
///
/// `bootstrap` is the target network when one is kept, otherwise the online
/// network.
pub fn td_target_and_error(net: &Mlp, bootstrap: &Mlp, t: &Transition, gamma: f64, use_pds: bool) -> Result<(f64, f64)> {
    let target = td_target(bootstrap, t, gamma, use_pds)?;
    let estimate = net.forward(&t.state)?[t.action];
    Ok((target, target - estimate))
}

fn td_target(bootstrap: &Mlp, t: &Transition, gamma: f64, use_pds: bool) -> Result<f64> {
    let known = if use_pds { Some(&t.next_known[..]) } else { None };
    let next = q_hat(bootstrap, &t.next_state, known)?;
    let max_next = next.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let r = if use_pds { t.r_unknown } else { t.reward() };
    Ok(r + gamma * max_next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStats {
    pub episode: usize,
    pub epsilon: f64,
    pub mean_reward: f64,
    pub mean_secrecy_rate: f64,
    pub qos_sat_prob: f64,
    pub mean_loss: f64,
}

pub type TrainStats = Vec<EpisodeStats>;

/// A trained or training agent: network, optional target copy, replay and
/// the frozen input normalizer.
#[derive(Debug, Clone)]
pub struct Agent {
    pub config: AgentConfig,
    pub net: Mlp,
    target: Option<Mlp>,
    optimizer: Optimizer,
    buffer: PrioritizedReplay<Transition>,
    pub normalizer: Normalizer,
    rng: ChaCha8Rng,
    updates: u64,
}

impl Agent {
    pub fn new(config: AgentConfig, state_len: usize, n_actions: usize, normalizer: Normalizer, seed: u64) -> Result<Self> {
        config.validate()?;
        if normalizer.mean.len() != state_len {
            return Err(Error::invalid("normalizer width does not match state length"));
        }
        let mut sizes = vec![state_len];
        sizes.extend(&config.hidden);
        sizes.push(n_actions);
        let net = Mlp::init(&sizes, seed)?;
        let target = (config.target_sync > 0).then(|| net.clone());
        let optimizer = Optimizer::new(config.optimizer, config.lr, net.params().len());
        let eta1 = if config.use_per { config.eta1 } else { 0.0 };
        let buffer = PrioritizedReplay::new(config.buffer_capacity, eta1)?;
        Ok(Self {
            config,
            net,
            target,
            optimizer,
            buffer,
            normalizer,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_a9e7),
            updates: 0,
        })
    }

    pub fn buffer(&self) -> &PrioritizedReplay<Transition> {
        &self.buffer
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Greedy (or epsilon-greedy) action for a normalized state.
    pub fn act(&mut self, state: &[f64], known: Option<&[f64]>, epsilon: f64) -> Result<usize> {
        let q = q_hat(&self.net, state, if self.config.use_pds { known } else { None })?;
        Ok(select_action(&q, epsilon, &mut self.rng))
    }

    /// Stores a transition at the current maximum priority.
    pub fn remember(&mut self, t: Transition) -> Result<()> {
        if t.action >= self.net.output_size() {
            return Err(Error::invalid(format!("transition action {} out of range", t.action)));
        }
        self.buffer.push_max(t);
        Ok(())
    }

    /// One prioritized minibatch update. Returns the batch loss, or `None`
    /// while the buffer holds fewer than one batch.
    pub fn learn(&mut self) -> Result<Option<f64>> {
        let h = self.config.batch_size;
        if self.buffer.len() < h {
            return Ok(None);
        }
        let eta2 = if self.config.use_per { self.config.eta2 } else { 0.0 };
        let (indices, grad, loss, errors) = {
            let sample = self.buffer.sample(h, eta2, &mut self.rng)?;
            let bootstrap = self.target.as_ref().unwrap_or(&self.net);
            let targets = sample
                .transitions
                .iter()
                .map(|t| td_target(bootstrap, t, self.config.gamma, self.config.use_pds))
                .collect::<Result<Vec<_>>>()?;
            let batch = Batch {
                inputs: sample.transitions.iter().map(|t| &t.state[..]).collect(),
                actions: sample.transitions.iter().map(|t| t.action).collect(),
                targets,
                is_weights: sample.is_weights.clone(),
            };
            let (grad, loss, errors) = self.net.gradient_with_errors(&batch)?;
            (sample.indices, grad, loss, errors)
        };
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("non-finite loss {loss} at update {}", self.updates)));
        }
        let abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
        self.buffer.update_priorities(&indices, &abs)?;
        self.net.apply_gradient(&grad, &mut self.optimizer)?;
        self.updates += 1;
        let sync = self.config.target_sync as u64;
        if sync > 0 && self.updates % sync == 0 {
            self.target = Some(self.net.clone());
        }
        Ok(Some(loss))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            net: self.net.clone(),
            extras: vec![
                ("norm_mean".into(), self.normalizer.mean.clone()),
                ("norm_scale".into(), self.normalizer.scale.clone()),
                ("use_pds".into(), vec![if self.config.use_pds { 1.0 } else { 0.0 }]),
            ],
        }
    }
}

/// Greedy policy restored from a checkpoint.
#[derive(Debug, Clone)]
pub struct GreedyPolicy {
    pub net: Mlp,
    pub normalizer: Normalizer,
    pub use_pds: bool,
}

impl GreedyPolicy {
    pub fn from_agent(agent: &Agent) -> Self {
        Self {
            net: agent.net.clone(),
            normalizer: agent.normalizer.clone(),
            use_pds: agent.config.use_pds,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let width = ck.net.input_size();
        let normalizer = match (ck.extra("norm_mean"), ck.extra("norm_scale")) {
            (Some(m), Some(s)) if m.len() == width && s.len() == width => Normalizer {
                mean: m.to_vec(),
                scale: s.to_vec(),
            },
            (None, None) => Normalizer::identity(width),
            _ => return Err(Error::Checkpoint("normalizer does not match network input width".into())),
        };
        let use_pds = ck.extra("use_pds").map(|v| v.first() == Some(&1.0)).unwrap_or(false);
        Ok(Self {
            net: ck.net.clone(),
            normalizer,
            use_pds,
        })
    }
}

/// Anything that picks an action from a raw observation.
pub trait Policy {
    fn act(&mut self, env: &mut dyn Mdp, raw_state: &[f64]) -> Result<usize>;
}

impl Policy for GreedyPolicy {
    fn act(&mut self, env: &mut dyn Mdp, raw_state: &[f64]) -> Result<usize> {
        let x = self.normalizer.apply(raw_state);
        let known = if self.use_pds { Some(env.known_rewards()?) } else { None };
        let q = q_hat(&self.net, &x, known.as_deref())?;
        Ok(argmax(&q))
    }
}

/// Uniform random action every step from its own stream, so the channel
/// realizations match those seen by any other policy on the same seed.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, env: &mut dyn Mdp, _raw_state: &[f64]) -> Result<usize> {
        Ok(self.rng.random_range(0..env.n_actions()))
    }
}

/// Always the same action.
#[derive(Debug, Clone, Copy)]
pub struct FixedPolicy(pub usize);

impl Policy for FixedPolicy {
    fn act(&mut self, _env: &mut dyn Mdp, _raw_state: &[f64]) -> Result<usize> {
        Ok(self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalStats {
    pub avg_secrecy_rate: f64,
    pub avg_reward: f64,
    pub qos_secrecy: f64,
    pub qos_rate: f64,
    pub qos_joint: f64,
}

/// Rolls out `policy` for `episodes` full episodes without exploration.
pub fn evaluate(policy: &mut dyn Policy, env: &mut dyn Mdp, episodes: usize) -> Result<EvalStats> {
    let mut n = 0usize;
    let mut acc = EvalStats {
        avg_secrecy_rate: 0.0,
        avg_reward: 0.0,
        qos_secrecy: 0.0,
        qos_rate: 0.0,
        qos_joint: 0.0,
    };
    for _ in 0..episodes {
        let mut s = env.reset()?;
        while !env.done() {
            let a = policy.act(env, &s)?;
            let fb = env.step(a)?;
            acc.avg_secrecy_rate += fb.mean_secrecy;
            acc.avg_reward += fb.r_total;
            acc.qos_secrecy += fb.qos.0;
            acc.qos_rate += fb.qos.1;
            acc.qos_joint += fb.qos.2;
            n += 1;
            s = fb.next_state;
        }
    }
    if n > 0 {
        let d = n as f64;
        acc.avg_secrecy_rate /= d;
        acc.avg_reward /= d;
        acc.qos_secrecy /= d;
        acc.qos_rate /= d;
        acc.qos_joint /= d;
    }
    Ok(acc)
}

/// Trains `agent` on `env` for `episodes` episodes (Algorithm-1 loop).
pub fn train(agent: &mut Agent, env: &mut dyn Mdp, episodes: usize) -> Result<TrainStats> {
    if env.state_len() != agent.net.input_size() || env.n_actions() != agent.net.output_size() {
        return Err(Error::invalid("agent network does not match environment dimensions"));
    }
    let use_pds = agent.config.use_pds;
    let mut stats = Vec::with_capacity(episodes);
    let mut global_step = 0usize;
    for episode in 0..episodes {
        let epsilon = agent.config.epsilon(episode);
        let raw = env.reset()?;
        let mut state: Arc<[f64]> = agent.normalizer.apply(&raw).into();
        let mut known: Arc<[f64]> = if use_pds { env.known_rewards()?.into() } else { Arc::from(Vec::new()) };
        let (mut sum_r, mut sum_sec, mut sum_qos, mut sum_loss) = (0.0, 0.0, 0.0, 0.0);
        let (mut steps, mut n_loss) = (0usize, 0usize);
        while !env.done() {
            let action = agent.act(&state, use_pds.then_some(&known[..]), epsilon)?;
            let fb = env.step(action)?;
            check_split(&fb)?;
            let next_state: Arc<[f64]> = agent.normalizer.apply(&fb.next_state).into();
            let next_known: Arc<[f64]> = if use_pds { env.known_rewards()?.into() } else { known.clone() };
            agent.remember(Transition {
                state: state.clone(),
                action,
                r_known: fb.r_known,
                r_unknown: fb.r_unknown,
                pds_state: agent.normalizer.apply(&fb.pds_state).into(),
                next_state: next_state.clone(),
                next_known: next_known.clone(),
            })?;
            global_step += 1;
            if global_step % agent.config.train_interval == 0 {
                if let Some(loss) = agent.learn()? {
                    sum_loss += loss;
                    n_loss += 1;
                }
            }
            sum_r += fb.r_total;
            sum_sec += fb.mean_secrecy;
            sum_qos += fb.qos.2;
            steps += 1;
            state = next_state;
            known = next_known;
        }
        let d = steps.max(1) as f64;
        stats.push(EpisodeStats {
            episode,
            epsilon,
            mean_reward: sum_r / d,
            mean_secrecy_rate: sum_sec / d,
            qos_sat_prob: sum_qos / d,
            mean_loss: if n_loss > 0 { sum_loss / n_loss as f64 } else { 0.0 },
        });
    }
    Ok(stats)
}

fn check_split(fb: &Feedback) -> Result<()> {
    let tol = 1e-9 * fb.r_realized.abs().max(1.0);
    if fb.r_known + fb.r_unknown != fb.r_total || (fb.r_total - fb.r_realized).abs() > tol {
        return Err(Error::Precondition(format!(
            "reward split inconsistent: {} + {} vs {} (realized {})",
            fb.r_known, fb.r_unknown, fb.r_total, fb.r_realized
        )));
    }
    Ok(())
}
