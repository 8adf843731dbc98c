//! Network geometry, path gains and Rayleigh-faded channel realizations.
//!
//! Node layout: the two primary users sit at A=(0,0) and B=(d_AB,0), the
//! relaying secondary transmitter C at (d_AC,0) on the segment, and the
//! secondary receiver D on the perpendicular bisector at (d_AB/2, 0.5).

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::numkernel::{C64, CVec};

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("d_AC={0} must lie strictly inside (0, d_AB={1})")]
    RelayOutOfRange(f64, f64),
    #[error("invalid system parameter: {0}")]
    InvalidParameter(String),
}

/// Pairwise node distances for one placement of the relay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub d_ab: f64,
    pub d_ac: f64,
    pub d_bc: f64,
    pub d_cd: f64,
    pub d_ad: f64,
    pub d_bd: f64,
}

/// Distance path-loss gain `c * d^{-n}`.
pub fn path_gain(d: f64, c: f64, n: f64) -> Result<f64, ChannelError> {
    if d <= 0.0 {
        return Err(ChannelError::NonPositiveDistance(d));
    }
    Ok(c * d.powf(-n))
}

/// Place the relay at distance `d_ac` from A on the A-B segment and derive
/// all remaining distances from the fixed coordinates above.
pub fn make_geometry(d_ac: f64, d_ab: f64) -> Result<Geometry, ChannelError> {
    if !(d_ac > 0.0 && d_ac < d_ab) {
        return Err(ChannelError::RelayOutOfRange(d_ac, d_ab));
    }
    let half = d_ab / 2.0;
    let d_cd = ((half - d_ac).powi(2) + 0.25).sqrt();
    let d_ad = (half * half + 0.25).sqrt();
    Ok(Geometry {
        d_ab,
        d_ac,
        d_bc: d_ab - d_ac,
        d_cd,
        d_ad,
        d_bd: d_ad,
    })
}

/// Static system parameters: antenna count, linear transmit powers, noise
/// variances and the path-loss law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub m: usize,
    pub p_a: f64,
    pub p_b: f64,
    pub p_c: f64,
    pub sigma2_a: f64,
    pub sigma2_b: f64,
    pub sigma2_c: f64,
    pub sigma2_d: f64,
    /// Attenuation constant of the path-loss law.
    pub atten: f64,
    /// Path-loss exponent.
    pub exponent: f64,
    /// The multiple-access sum-rate bound weighs both outer products with
    /// P_A/sigma2_C; set true to weigh the B term with P_B instead.
    pub mac_sum_uses_pb: bool,
}

impl SystemParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let positives = [
            ("p_a", self.p_a),
            ("p_b", self.p_b),
            ("p_c", self.p_c),
            ("sigma2_a", self.sigma2_a),
            ("sigma2_b", self.sigma2_b),
            ("sigma2_c", self.sigma2_c),
            ("sigma2_d", self.sigma2_d),
            ("atten", self.atten),
            ("exponent", self.exponent),
        ];
        for (name, v) in positives {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ChannelError::InvalidParameter(format!("{name}={v}")));
            }
        }
        if self.m == 0 {
            return Err(ChannelError::InvalidParameter("m=0".into()));
        }
        Ok(())
    }
}

/// Convert a dB power/gain figure to linear scale.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// One draw of every channel in the network, together with the parameters
/// it was drawn under.
#[derive(Debug, Clone)]
pub struct NetworkRealization {
    pub params: SystemParams,
    /// PU A -> relay, length M.
    pub h_a: CVec,
    /// PU B -> relay, length M.
    pub h_b: CVec,
    /// Relay -> PU A, length M.
    pub g_a: CVec,
    /// Relay -> PU B, length M.
    pub g_b: CVec,
    /// Relay -> secondary receiver, length M.
    pub g_d: CVec,
    /// PU A -> secondary receiver.
    pub h_ad: C64,
    /// PU B -> secondary receiver.
    pub h_bd: C64,
}

impl NetworkRealization {
    /// Relabel the primary users (A<->B); used by distribution-symmetry
    /// regressions.
    pub fn swap_roles(&self) -> NetworkRealization {
        let mut params = self.params;
        std::mem::swap(&mut params.p_a, &mut params.p_b);
        std::mem::swap(&mut params.sigma2_a, &mut params.sigma2_b);
        NetworkRealization {
            params,
            h_a: self.h_b.clone(),
            h_b: self.h_a.clone(),
            g_a: self.g_b.clone(),
            g_b: self.g_a.clone(),
            g_d: self.g_d.clone(),
            h_ad: self.h_bd,
            h_bd: self.h_ad,
        }
    }
}

/// Counter-based substream for one trial: reproducible regardless of how
/// trials are scheduled across workers.
pub fn trial_rng(master_seed: u64, trial_index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(trial_index);
    rng
}

fn draw_cn(rng: &mut impl Rng, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

fn draw_cvec(rng: &mut impl Rng, m: usize, variance: f64) -> CVec {
    CVec::from_fn(m, |_, _| draw_cn(rng, variance))
}

/// Draw one network realization. Every coefficient is an independent
/// circularly-symmetric complex Gaussian whose variance is the path gain of
/// its link. The draw order (h_A, h_B, g_A, g_B, g_D, h_AD, h_BD) is part
/// of the reproducibility contract.
pub fn draw_realization(
    geometry: &Geometry,
    params: &SystemParams,
    rng: &mut impl Rng,
) -> Result<NetworkRealization, ChannelError> {
    params.validate()?;
    let gain = |d: f64| path_gain(d, params.atten, params.exponent);
    let g_ac = gain(geometry.d_ac)?;
    let g_bc = gain(geometry.d_bc)?;
    let g_cd = gain(geometry.d_cd)?;
    let g_ad = gain(geometry.d_ad)?;
    let g_bd = gain(geometry.d_bd)?;
    let m = params.m;
    Ok(NetworkRealization {
        params: *params,
        h_a: draw_cvec(rng, m, g_ac),
        h_b: draw_cvec(rng, m, g_bc),
        g_a: draw_cvec(rng, m, g_ac),
        g_b: draw_cvec(rng, m, g_bc),
        g_d: draw_cvec(rng, m, g_cd),
        h_ad: draw_cn(rng, g_ad),
        h_bd: draw_cn(rng, g_bd),
    })
}
