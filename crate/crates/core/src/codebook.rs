//! Discrete action space: BS precoder and IRS phase codebooks.
//!
//! A joint action index `idx` addresses the pair
//! `(idx / |irs|, idx % |irs|)`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{Complex, ComplexMatrix};
use crate::rates::BeamformingPair;

#[derive(Debug, Clone, PartialEq)]
pub struct BsCodebook {
    pub entries: Vec<ComplexMatrix>,
    pub power_levels: Vec<f64>,
}

impl BsCodebook {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrsCodebook {
    pub bits: u32,
    pub entries: Vec<Vec<f64>>,
}

impl IrsCodebook {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct JointAction {
    pub bs_index: usize,
    pub irs_index: usize,
}

/// Unit-norm DFT direction `q` out of `n_directions`, sampled on `n` antennas.
pub fn dft_direction(n: usize, q: usize, n_directions: usize) -> Vec<Complex> {
    let scale = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|i| Complex::from_polar(scale, 2.0 * PI * (q * i) as f64 / n_directions as f64))
        .collect()
}

/// Ordered selections of `k` distinct items from `0..n`, in lexicographic order.
fn arrangements(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, k: usize, cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for q in 0..n {
            if !used[q] {
                used[q] = true;
                cur.push(q);
                rec(n, k, cur, used, out);
                cur.pop();
                used[q] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(n, k, &mut Vec::with_capacity(k), &mut vec![false; n], &mut out);
    out
}

/// Every assignment of `k` distinct DFT directions to the users, at each of
/// `n_power_levels` evenly spaced total powers up to `p_max` split equally
/// across users. Direction arrangements vary slowest, power level fastest.
pub fn build_bs_codebook(n: usize, k: usize, p_max: f64, n_directions: usize, n_power_levels: usize) -> Result<BsCodebook> {
    if n == 0 || k == 0 || n_power_levels == 0 {
        return Err(Error::invalid("BS codebook needs N, K and power levels >= 1"));
    }
    if n_directions < k {
        return Err(Error::invalid(format!(
            "BS codebook needs at least K = {k} directions, got {n_directions}"
        )));
    }
    if !(p_max > 0.0) || !p_max.is_finite() {
        return Err(Error::invalid(format!("P_max must be positive, got {p_max}")));
    }
    let directions: Vec<Vec<Complex>> = (0..n_directions).map(|q| dft_direction(n, q, n_directions)).collect();
    let power_levels: Vec<f64> = (1..=n_power_levels)
        .map(|l| p_max * l as f64 / n_power_levels as f64)
        .collect();
    let mut entries = Vec::new();
    for arr in arrangements(n_directions, k) {
        for &p in &power_levels {
            let amp = (p / k as f64).sqrt();
            entries.push(ComplexMatrix::from_fn(n, k, |row, col| directions[arr[col]][row] * amp));
        }
    }
    Ok(BsCodebook { entries, power_levels })
}

/// Phase patterns on the `2^bits`-point grid; entry 0 is all-zero and the
/// rest are drawn i.i.d. from a generator seeded with `seed`.
pub fn build_irs_codebook(l: usize, bits: u32, size: usize, seed: u64) -> Result<IrsCodebook> {
    if size == 0 {
        return Err(Error::invalid("IRS codebook size must be >= 1"));
    }
    if bits == 0 || bits > 16 {
        return Err(Error::invalid(format!("phase resolution must be 1..=16 bits, got {bits}")));
    }
    let levels = 1usize << bits;
    let step = 2.0 * PI / levels as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = vec![vec![0.0; l]];
    for _ in 1..size {
        entries.push((0..l).map(|_| rng.random_range(0..levels) as f64 * step).collect());
    }
    Ok(IrsCodebook { bits, entries })
}

/// The joint action space.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebooks {
    pub bs: BsCodebook,
    pub irs: IrsCodebook,
}

impl Codebooks {
    pub fn len(&self) -> usize {
        self.bs.len() * self.irs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn split(&self, idx: usize) -> Result<JointAction> {
        if idx >= self.len() {
            return Err(Error::invalid(format!(
                "action index {idx} out of range for {} actions",
                self.len()
            )));
        }
        Ok(JointAction {
            bs_index: idx / self.irs.len(),
            irs_index: idx % self.irs.len(),
        })
    }

    pub fn encode(&self, action: JointAction) -> Result<usize> {
        if action.bs_index >= self.bs.len() || action.irs_index >= self.irs.len() {
            return Err(Error::invalid(format!("joint action {action:?} out of range")));
        }
        Ok(action.bs_index * self.irs.len() + action.irs_index)
    }

    pub fn pair(&self, action: JointAction) -> BeamformingPair {
        BeamformingPair {
            v: self.bs.entries[action.bs_index].clone(),
            theta: self.irs.entries[action.irs_index].clone(),
        }
    }
}

pub fn decode_action(idx: usize, books: &Codebooks) -> Result<BeamformingPair> {
    let a = books.split(idx)?;
    Ok(books.pair(a))
}
