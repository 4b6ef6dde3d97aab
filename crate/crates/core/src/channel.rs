//! Wireless channel generation and evolution.
//!
//! Every link is Rayleigh small-scale fading scaled by a distance-based
//! path gain. Outdated CSI is modelled as a first-order Gauss-Markov
//! process whose coefficient comes from the Jakes autocorrelation, and
//! estimation error as a norm-bounded perturbation of the user and
//! eavesdropper vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::{bessel_j0, Complex, ComplexMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub bs: Point,
    pub irs: Point,
    pub users: Vec<Point>,
    pub eves: Vec<Point>,
}

impl Geometry {
    /// Checks that no two nodes share a position.
    pub fn validate(&self) -> Result<()> {
        let nodes: Vec<(String, Point)> = [("bs".to_string(), self.bs), ("irs".to_string(), self.irs)]
            .into_iter()
            .chain(self.users.iter().enumerate().map(|(k, p)| (format!("user{k}"), *p)))
            .chain(self.eves.iter().enumerate().map(|(m, p)| (format!("eve{m}"), *p)))
            .collect();
        for (i, (na, a)) in nodes.iter().enumerate() {
            if !(a.x.is_finite() && a.y.is_finite()) {
                return Err(Error::invalid(format!("{na} position is not finite")));
            }
            for (nb, b) in &nodes[i + 1..] {
                if a.distance(b) <= 0.0 {
                    return Err(Error::invalid(format!("{na} and {nb} are co-located")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLossParams {
    pub pl0_db: f64,
    pub d0: f64,
    pub exp_bs_mu: f64,
    pub exp_bs_irs: f64,
    pub exp_irs_mu: f64,
}

impl Default for PathLossParams {
    fn default() -> Self {
        Self {
            pl0_db: 30.0,
            d0: 1.0,
            exp_bs_mu: 3.2,
            exp_bs_irs: 2.2,
            exp_irs_mu: 2.2,
        }
    }
}

/// Linear power gain of a link of length `d`.
///
/// Attenuation is `pl0_db` at `d0` and grows by `10 * exponent` dB per decade.
pub fn path_gain(d: f64, exponent: f64, plp: &PathLossParams) -> Result<f64> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::invalid(format!("link distance must be positive, got {d}")));
    }
    let loss_db = plp.pl0_db + 10.0 * exponent * (d / plp.d0).log10();
    Ok(10f64.powf(-loss_db / 10.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DopplerParams {
    pub velocity: f64,
    pub carrier_freq: f64,
    pub light_speed: f64,
    pub t_delay: f64,
}

impl DopplerParams {
    pub fn doppler_spread(&self) -> f64 {
        self.velocity * self.carrier_freq / self.light_speed
    }
}

/// Jakes autocorrelation `J0(2 pi f_D T_delay)`.
pub fn autocorrelation(dp: &DopplerParams) -> f64 {
    let arg = 2.0 * std::f64::consts::PI * dp.doppler_spread() * dp.t_delay;
    bessel_j0(arg).unwrap_or(0.0)
}

/// Norm bounds on the estimation error, one per link class.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorRadii {
    pub bu: f64,
    pub ru: f64,
    pub be: f64,
    pub re: f64,
}

impl ErrorRadii {
    pub const ZERO: Self = Self {
        bu: 0.0,
        ru: 0.0,
        be: 0.0,
        re: 0.0,
    };

    pub fn is_zero(&self) -> bool {
        *self == Self::ZERO
    }
}

/// Large-scale power gain of every link, kept alongside the fading so that
/// innovations can be drawn with the right variance.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkGains {
    pub br: f64,
    pub bu: Vec<f64>,
    pub ru: Vec<f64>,
    pub be: Vec<f64>,
    pub re: Vec<f64>,
}

/// All channel blocks at one time slot.
///
/// `h_br` is L x N (BS to IRS). Per-user vectors `h_bu[k]` (length N) and
/// `h_ru[k]` (length L); per-eavesdropper `h_be[m]` and `h_re[m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub h_br: ComplexMatrix,
    pub h_bu: Vec<Vec<Complex>>,
    pub h_ru: Vec<Vec<Complex>>,
    pub h_be: Vec<Vec<Complex>>,
    pub h_re: Vec<Vec<Complex>>,
    pub gains: LinkGains,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub l: usize,
}

impl ChannelSet {
    pub fn dims(&self) -> Dims {
        Dims {
            n: self.h_br.cols(),
            k: self.h_bu.len(),
            m: self.h_be.len(),
            l: self.h_br.rows(),
        }
    }

    /// Channel set of the given shape with every coefficient and gain zero.
    pub fn zeros(dims: Dims) -> Self {
        let z = |len: usize, count: usize| vec![vec![Complex::new(0.0, 0.0); len]; count];
        Self {
            h_br: ComplexMatrix::zeros(dims.l, dims.n),
            h_bu: z(dims.n, dims.k),
            h_ru: z(dims.l, dims.k),
            h_be: z(dims.n, dims.m),
            h_re: z(dims.l, dims.m),
            gains: LinkGains {
                br: 0.0,
                bu: vec![0.0; dims.k],
                ru: vec![0.0; dims.k],
                be: vec![0.0; dims.m],
                re: vec![0.0; dims.m],
            },
        }
    }

    /// Removes the reflected path: IRS links and their gains are zeroed.
    pub fn without_irs(&self) -> Self {
        let mut out = self.clone();
        out.h_br = ComplexMatrix::zeros(self.h_br.rows(), self.h_br.cols());
        for v in out.h_ru.iter_mut().chain(out.h_re.iter_mut()) {
            v.iter_mut().for_each(|z| *z = Complex::new(0.0, 0.0));
        }
        out.gains.br = 0.0;
        out.gains.ru.iter_mut().for_each(|g| *g = 0.0);
        out.gains.re.iter_mut().for_each(|g| *g = 0.0);
        out
    }

    pub fn is_finite(&self) -> bool {
        let vec_ok = |vs: &[Vec<Complex>]| vs.iter().flatten().all(|z| z.re.is_finite() && z.im.is_finite());
        self.h_br.is_finite() && vec_ok(&self.h_bu) && vec_ok(&self.h_ru) && vec_ok(&self.h_be) && vec_ok(&self.h_re)
    }
}

/// Circularly-symmetric complex Gaussian with unit variance.
pub fn cn01<R: Rng + ?Sized>(rng: &mut R) -> Complex {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn rayleigh_vec<R: Rng + ?Sized>(len: usize, gain: f64, rng: &mut R) -> Vec<Complex> {
    let s = gain.sqrt();
    (0..len).map(|_| cn01(rng) * s).collect()
}

/// Child streams for the direct links (from the BS) and for the links
/// touching the IRS. The parent always advances by exactly two draws, so
/// the direct-link sequence does not depend on N, L or the number of nodes.
fn split_streams<R: Rng + ?Sized>(rng: &mut R) -> (ChaCha8Rng, ChaCha8Rng) {
    let direct = ChaCha8Rng::seed_from_u64(rng.random());
    let irs = ChaCha8Rng::seed_from_u64(rng.random());
    (direct, irs)
}

/// Draws every link from scratch for the given geometry.
///
/// `n` BS antennas and `l` IRS elements; K and M come from the geometry.
/// Eavesdropper links reuse the user-link exponents.
pub fn sample_initial<R: Rng + ?Sized>(
    geom: &Geometry,
    n: usize,
    l: usize,
    plp: &PathLossParams,
    rng: &mut R,
) -> Result<ChannelSet> {
    geom.validate()?;
    let gains = LinkGains {
        br: path_gain(geom.bs.distance(&geom.irs), plp.exp_bs_irs, plp)?,
        bu: geom
            .users
            .iter()
            .map(|p| path_gain(geom.bs.distance(p), plp.exp_bs_mu, plp))
            .collect::<Result<_>>()?,
        ru: geom
            .users
            .iter()
            .map(|p| path_gain(geom.irs.distance(p), plp.exp_irs_mu, plp))
            .collect::<Result<_>>()?,
        be: geom
            .eves
            .iter()
            .map(|p| path_gain(geom.bs.distance(p), plp.exp_bs_mu, plp))
            .collect::<Result<_>>()?,
        re: geom
            .eves
            .iter()
            .map(|p| path_gain(geom.irs.distance(p), plp.exp_irs_mu, plp))
            .collect::<Result<_>>()?,
    };
    let (mut direct, mut irs) = split_streams(rng);
    let h_bu = gains.bu.iter().map(|&g| rayleigh_vec(n, g, &mut direct)).collect();
    let h_be = gains.be.iter().map(|&g| rayleigh_vec(n, g, &mut direct)).collect();
    let sbr = gains.br.sqrt();
    let h_br = ComplexMatrix::from_fn(l, n, |_, _| cn01(&mut irs) * sbr);
    let h_ru = gains.ru.iter().map(|&g| rayleigh_vec(l, g, &mut irs)).collect();
    let h_re = gains.re.iter().map(|&g| rayleigh_vec(l, g, &mut irs)).collect();
    Ok(ChannelSet {
        h_br,
        h_bu,
        h_ru,
        h_be,
        h_re,
        gains,
    })
}

fn evolve_vec<R: Rng + ?Sized>(v: &[Complex], gain: f64, rho: f64, innov: f64, rng: &mut R) -> Vec<Complex> {
    let s = gain.sqrt() * innov;
    v.iter().map(|z| z * rho + cn01(rng) * s).collect()
}

/// One Gauss-Markov step: `h' = rho h + sqrt(1 - rho^2) h_new`.
pub fn evolve<R: Rng + ?Sized>(h: &ChannelSet, rho: f64, rng: &mut R) -> Result<ChannelSet> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::invalid(format!("correlation coefficient must lie in [0, 1], got {rho}")));
    }
    let (mut direct, mut irs) = split_streams(rng);
    if rho == 1.0 {
        return Ok(h.clone());
    }
    let innov = (1.0 - rho * rho).sqrt();
    let step = |vs: &[Vec<Complex>], gains: &[f64], rng: &mut ChaCha8Rng| -> Vec<Vec<Complex>> {
        vs.iter().zip(gains).map(|(v, &g)| evolve_vec(v, g, rho, innov, rng)).collect()
    };
    let h_bu = step(&h.h_bu, &h.gains.bu, &mut direct);
    let h_be = step(&h.h_be, &h.gains.be, &mut direct);
    let sbr = h.gains.br.sqrt() * innov;
    let mut h_br = h.h_br.clone();
    for z in h_br.data_mut() {
        *z = *z * rho + cn01(&mut irs) * sbr;
    }
    let h_ru = step(&h.h_ru, &h.gains.ru, &mut irs);
    let h_re = step(&h.h_re, &h.gains.re, &mut irs);
    Ok(ChannelSet {
        h_br,
        h_bu,
        h_ru,
        h_be,
        h_re,
        gains: h.gains.clone(),
    })
}

/// Uniform draw from the complex ball of the given radius in `C^dim`.
pub fn sample_ball<R: Rng + ?Sized>(dim: usize, radius: f64, rng: &mut R) -> Vec<Complex> {
    if radius == 0.0 || dim == 0 {
        return vec![Complex::new(0.0, 0.0); dim];
    }
    let dir: Vec<Complex> = loop {
        let d: Vec<Complex> = (0..dim).map(|_| cn01(rng)).collect();
        if crate::numerics::norm_sq(&d) > 0.0 {
            break d;
        }
    };
    let norm = crate::numerics::norm_sq(&dir).sqrt();
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / (2.0 * dim as f64));
    dir.into_iter().map(|z| z * (r / norm)).collect()
}

fn perturb<R: Rng + ?Sized>(vs: &[Vec<Complex>], radius: f64, rng: &mut R) -> Vec<Vec<Complex>> {
    vs.iter()
        .map(|v| {
            let delta = sample_ball(v.len(), radius, rng);
            v.iter().zip(delta).map(|(a, d)| a + d).collect()
        })
        .collect()
}

/// Adds a norm-bounded error to every user and eavesdropper vector.
/// The BS-IRS matrix is left untouched.
pub fn apply_error<R: Rng + ?Sized>(h: &ChannelSet, radii: &ErrorRadii, rng: &mut R) -> ChannelSet {
    let (mut direct, mut irs) = split_streams(rng);
    if radii.is_zero() {
        return h.clone();
    }
    ChannelSet {
        h_br: h.h_br.clone(),
        h_bu: perturb(&h.h_bu, radii.bu, &mut direct),
        h_be: perturb(&h.h_be, radii.be, &mut direct),
        h_ru: perturb(&h.h_ru, radii.ru, &mut irs),
        h_re: perturb(&h.h_re, radii.re, &mut irs),
        gains: h.gains.clone(),
    }
}
