//! SINR, achievable rate and secrecy rate from channels and beamformers.

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::numerics::{frobenius_norm_sq, Complex, ComplexMatrix};

/// BS precoders (N x K, column k serves user k) and IRS phases.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingPair {
    pub v: ComplexMatrix,
    pub theta: Vec<f64>,
}

impl BeamformingPair {
    pub fn satisfies_power(&self, p_max: f64) -> bool {
        transmit_power(&self.v) <= p_max + 1e-9
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseParams {
    pub users: Vec<f64>,
    pub eves: Vec<f64>,
}

impl NoiseParams {
    pub fn uniform(power_w: f64, k: usize, m: usize) -> Self {
        Self {
            users: vec![power_w; k],
            eves: vec![power_w; m],
        }
    }
}

/// `Tr(V V^H)`.
pub fn transmit_power(v: &ComplexMatrix) -> f64 {
    frobenius_norm_sq(v)
}

/// Composite channel row `h_r^H diag(e^{j theta}) H_br + h_b^H`.
///
/// The returned entries are those of the row vector, so the received
/// amplitude for a precoder `v` is `sum_n out[n] * v[n]`.
pub fn effective_channel(h_r: &[Complex], theta: &[f64], h_br: &ComplexMatrix, h_b: &[Complex]) -> Result<Vec<Complex>> {
    if h_r.len() != h_br.rows() || theta.len() != h_br.rows() || h_b.len() != h_br.cols() {
        return Err(Error::invalid(format!(
            "effective_channel: h_r {} / theta {} / H_br {}x{} / h_b {}",
            h_r.len(),
            theta.len(),
            h_br.rows(),
            h_br.cols(),
            h_b.len()
        )));
    }
    let mut out: Vec<Complex> = h_b.iter().map(|z| z.conj()).collect();
    for (l, (hr, &th)) in h_r.iter().zip(theta).enumerate() {
        let coeff = hr.conj() * Complex::from_polar(1.0, th);
        if coeff.norm_sqr() == 0.0 {
            continue;
        }
        for (o, h) in out.iter_mut().zip(h_br.row(l)) {
            *o += coeff * h;
        }
    }
    Ok(out)
}

/// Effective channel rows of every user and eavesdropper for one phase pattern.
#[derive(Debug, Clone)]
pub struct EffectiveChannels {
    pub users: Vec<Vec<Complex>>,
    pub eves: Vec<Vec<Complex>>,
}

impl EffectiveChannels {
    pub fn new(ch: &ChannelSet, theta: &[f64]) -> Result<Self> {
        let users = ch
            .h_ru
            .iter()
            .zip(&ch.h_bu)
            .map(|(hr, hb)| effective_channel(hr, theta, &ch.h_br, hb))
            .collect::<Result<_>>()?;
        let eves = ch
            .h_re
            .iter()
            .zip(&ch.h_be)
            .map(|(hr, hb)| effective_channel(hr, theta, &ch.h_br, hb))
            .collect::<Result<_>>()?;
        Ok(Self { users, eves })
    }
}

/// `|g v_i|^2` for every stream `i`.
fn stream_powers(g: &[Complex], v: &ComplexMatrix) -> Vec<f64> {
    let (n, k) = (v.rows(), v.cols());
    let mut amp = vec![Complex::new(0.0, 0.0); k];
    for row in 0..n {
        let gr = g[row];
        for (a, vv) in amp.iter_mut().zip(v.row(row)) {
            *a += gr * vv;
        }
    }
    amp.iter().map(|a| a.norm_sqr()).collect()
}

fn rate_from_powers(powers: &[f64], target: usize, noise: f64) -> f64 {
    let signal = powers[target];
    let interference: f64 = powers.iter().enumerate().filter(|&(i, _)| i != target).map(|(_, p)| p).sum();
    (1.0 + signal / (interference + noise)).log2()
}

/// Every rate of one (channel, beamformer) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub user: Vec<f64>,
    /// `eve[m][k]`: rate of eavesdropper m on stream k.
    pub eve: Vec<Vec<f64>>,
    pub secrecy: Vec<f64>,
}

impl RateReport {
    pub fn from_effective(eff: &EffectiveChannels, v: &ComplexMatrix, noise: &NoiseParams) -> Self {
        let k = v.cols();
        let user: Vec<f64> = eff
            .users
            .iter()
            .enumerate()
            .map(|(u, g)| rate_from_powers(&stream_powers(g, v), u, noise.users[u]))
            .collect();
        let eve: Vec<Vec<f64>> = eff
            .eves
            .iter()
            .enumerate()
            .map(|(m, g)| {
                let p = stream_powers(g, v);
                (0..k).map(|s| rate_from_powers(&p, s, noise.eves[m])).collect()
            })
            .collect();
        let secrecy = (0..k)
            .map(|s| {
                let worst = eve.iter().map(|r| r[s]).fold(0.0, f64::max);
                (user[s] - worst).max(0.0)
            })
            .collect();
        Self { user, eve, secrecy }
    }

    pub fn compute(ch: &ChannelSet, bf: &BeamformingPair, noise: &NoiseParams) -> Result<Self> {
        check_shapes(ch, bf, noise)?;
        let eff = EffectiveChannels::new(ch, &bf.theta)?;
        Ok(Self::from_effective(&eff, &bf.v, noise))
    }
}

fn check_shapes(ch: &ChannelSet, bf: &BeamformingPair, noise: &NoiseParams) -> Result<()> {
    let d = ch.dims();
    if bf.v.rows() != d.n || bf.v.cols() != d.k {
        return Err(Error::invalid(format!(
            "precoder is {}x{}, channels need {}x{}",
            bf.v.rows(),
            bf.v.cols(),
            d.n,
            d.k
        )));
    }
    if noise.users.len() != d.k || noise.eves.len() != d.m {
        return Err(Error::invalid("noise parameters do not match user/eavesdropper counts"));
    }
    Ok(())
}

/// Achievable rate of user `k` in bits/s/Hz.
pub fn user_rate(ch: &ChannelSet, bf: &BeamformingPair, k: usize, noise: &NoiseParams) -> Result<f64> {
    check_shapes(ch, bf, noise)?;
    if k >= ch.h_bu.len() {
        return Err(Error::invalid(format!("user index {k} out of range")));
    }
    let g = effective_channel(&ch.h_ru[k], &bf.theta, &ch.h_br, &ch.h_bu[k])?;
    Ok(rate_from_powers(&stream_powers(&g, &bf.v), k, noise.users[k]))
}

/// Rate at which eavesdropper `m` decodes the stream meant for user `k`.
pub fn eve_rate(ch: &ChannelSet, bf: &BeamformingPair, m: usize, k: usize, noise: &NoiseParams) -> Result<f64> {
    check_shapes(ch, bf, noise)?;
    if m >= ch.h_be.len() || k >= ch.h_bu.len() {
        return Err(Error::invalid(format!("eavesdropper/user index ({m}, {k}) out of range")));
    }
    let g = effective_channel(&ch.h_re[m], &bf.theta, &ch.h_br, &ch.h_be[m])?;
    Ok(rate_from_powers(&stream_powers(&g, &bf.v), k, noise.eves[m]))
}

/// `[R_k - max_m R_{m,k}]^+`.
pub fn secrecy_rate(ch: &ChannelSet, bf: &BeamformingPair, k: usize, noise: &NoiseParams) -> Result<f64> {
    let ru = user_rate(ch, bf, k, noise)?;
    let mut worst = 0.0f64;
    for m in 0..ch.h_be.len() {
        worst = worst.max(eve_rate(ch, bf, m, k, noise)?);
    }
    Ok((ru - worst).max(0.0))
}
