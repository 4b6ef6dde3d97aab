#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use secbeam_core::agent::AgentConfig;
use secbeam_core::env::{Feedback, Mdp};
use secbeam_core::nn::OptimizerKind;
use secbeam_core::Result;

/// Three states, two actions. The reward splits into a known part
/// `R_KNOWN[s][a]` and an arrival bonus `R_ARRIVE[s']` only revealed by the
/// random transition.
pub const R_KNOWN: [[f64; 2]; 3] = [[1.0, 0.0], [0.5, 0.0], [2.0, 1.0]];
pub const R_ARRIVE: [f64; 3] = [0.0, -0.2, 0.3];
pub const P: [[[f64; 3]; 2]; 3] = [
    [[0.9, 0.1, 0.0], [0.2, 0.0, 0.8]],
    [[0.2, 0.8, 0.0], [0.0, 0.3, 0.7]],
    [[0.1, 0.0, 0.9], [0.0, 0.1, 0.9]],
];

/// Optimal action values by value iteration.
pub fn value_iteration(gamma: f64) -> [[f64; 2]; 3] {
    let mut v = [0.0; 3];
    let mut q = [[0.0; 2]; 3];
    for _ in 0..5000 {
        for s in 0..3 {
            for a in 0..2 {
                q[s][a] = R_KNOWN[s][a] + (0..3).map(|t| P[s][a][t] * (R_ARRIVE[t] + gamma * v[t])).sum::<f64>();
            }
        }
        for s in 0..3 {
            v[s] = q[s][0].max(q[s][1]);
        }
    }
    q
}

pub fn one_hot(s: usize) -> Vec<f64> {
    let mut x = vec![0.0; 3];
    x[s] = 1.0;
    x
}

pub struct Tabular {
    pub state: usize,
    pub t: usize,
    pub horizon: usize,
    rng: ChaCha8Rng,
}

impl Tabular {
    pub fn new(horizon: usize, seed: u64) -> Self {
        Self {
            state: 0,
            t: 0,
            horizon,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Mdp for Tabular {
    fn n_actions(&self) -> usize {
        2
    }

    fn state_len(&self) -> usize {
        3
    }

    fn reset(&mut self) -> Result<Vec<f64>> {
        self.state = self.rng.random_range(0..3);
        self.t = 0;
        Ok(one_hot(self.state))
    }

    fn known_rewards(&self) -> Result<Vec<f64>> {
        Ok(R_KNOWN[self.state].to_vec())
    }

    fn step(&mut self, action: usize) -> Result<Feedback> {
        let s = self.state;
        let u: f64 = self.rng.random();
        let mut acc = 0.0;
        let mut next = 2;
        for (t, p) in P[s][action].iter().enumerate() {
            acc += p;
            if u < acc {
                next = t;
                break;
            }
        }
        let r_known = R_KNOWN[s][action];
        let r_realized = r_known + R_ARRIVE[next];
        let r_unknown = r_realized - r_known;
        self.state = next;
        self.t += 1;
        Ok(Feedback {
            pds_state: one_hot(s),
            next_state: one_hot(next),
            r_known,
            r_unknown,
            r_total: r_known + r_unknown,
            r_realized,
            mean_secrecy: 0.0,
            qos: (1.0, 1.0, 1.0),
        })
    }

    fn done(&self) -> bool {
        self.t >= self.horizon
    }

    fn random_action(&mut self) -> usize {
        self.rng.random_range(0..2)
    }
}

/// Agent settings that solve the tabular MDP in a few hundred episodes.
pub fn tabular_config(use_pds: bool) -> AgentConfig {
    AgentConfig {
        gamma: 0.9,
        lr: 0.005,
        optimizer: OptimizerKind::Adam,
        eps_start: 1.0,
        eps_end: 0.1,
        eps_anneal_episodes: 100,
        batch_size: 16,
        target_sync: 50,
        use_pds,
        use_per: use_pds,
        buffer_capacity: 5000,
        hidden: vec![16],
        ..AgentConfig::default()
    }
}
