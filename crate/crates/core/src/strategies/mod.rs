//! Per-strategy optimal precoder design for the relaying secondary node:
//! amplify-and-forward, decode-and-forward with XOR combining, and
//! decode-and-forward with superposition coding, together with the
//! multiple-access decodability region, successive interference
//! cancellation at the secondary receiver, and rate evaluation.

mod af;
mod dfsup;
mod dfxor;

pub use af::{af_fractional_spec, design_af};
pub use dfsup::{design_dfsup, CancelSet};
pub use dfxor::design_dfxor;

use thiserror::Error;

use crate::channel::NetworkRealization;
use crate::conic::SolveOptions;
use crate::fracrank::FracError;
use crate::numkernel::{orthonormal_basis, CMat, CVec, KernelError, C64, RANK_TOL};

/// Relay strategy at the secondary node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Af,
    DfXor,
    DfSup,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Af => "af",
            Strategy::DfXor => "dfxor",
            Strategy::DfSup => "dfsup",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// End-to-end rate requirements of the two primary users and the SINR
/// thresholds they induce. The swap in the indices is intentional: PU i
/// decodes the partner's stream, so its threshold comes from the partner's
/// rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRequirements {
    pub r_a: f64,
    pub r_b: f64,
    /// SINR threshold at PU A: 2^(2 r_b) - 1.
    pub tau_a: f64,
    /// SINR threshold at PU B: 2^(2 r_a) - 1.
    pub tau_b: f64,
    /// max(r_a, r_b), the rate the XOR-combined stream must carry.
    pub r_max: f64,
    /// 2^(2 r_max) - 1.
    pub gamma: f64,
}

impl RateRequirements {
    pub fn new(r_a: f64, r_b: f64) -> Result<RateRequirements, DesignError> {
        if !(r_a >= 0.0 && r_b >= 0.0) || !r_a.is_finite() || !r_b.is_finite() {
            return Err(DesignError::ContractViolation(format!(
                "rates must be finite and nonnegative, got ({r_a}, {r_b})"
            )));
        }
        let r_max = r_a.max(r_b);
        Ok(RateRequirements {
            r_a,
            r_b,
            tau_a: (2.0f64).powf(2.0 * r_b) - 1.0,
            tau_b: (2.0f64).powf(2.0 * r_a) - 1.0,
            r_max,
            gamma: (2.0f64).powf(2.0 * r_max) - 1.0,
        })
    }
}

/// Phase-one decoding outcome at the secondary receiver. `a_a = false`
/// means the signal of PU A was decoded and its interference can be
/// canceled in phase two (the binary indicator value 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeIndicators {
    pub a_a: bool,
    pub a_b: bool,
}

impl DecodeIndicators {
    pub fn both_decoded(&self) -> bool {
        !self.a_a && !self.a_b
    }
    pub(crate) fn coef(active: bool) -> f64 {
        if active {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

impl From<FracError> for DesignError {
    fn from(e: FracError) -> Self {
        match e {
            FracError::Kernel(k) => DesignError::Kernel(k),
            other => DesignError::NumericalFailure(other.to_string()),
        }
    }
}

/// A design either exists or the constraint set is empty, which the
/// simulation layer counts as an outage.
#[derive(Debug)]
pub enum DesignOutcome {
    Feasible(PrecoderDesign),
    Infeasible,
}

#[derive(Debug, Clone, Copy)]
pub struct DesignOptions {
    /// Route degenerate instances through the generic numeric path instead
    /// of the closed forms; used by cross-checking tests.
    pub force_numeric: bool,
    pub solver: SolveOptions,
}

impl Default for DesignOptions {
    fn default() -> Self {
        DesignOptions {
            force_numeric: false,
            solver: SolveOptions {
                tol: 1e-9,
                max_iter: 200,
            },
        }
    }
}

/// Which route produced a design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolvePath {
    Sdp,
    Socp,
    ClosedForm,
}

impl SolvePath {
    pub fn name(&self) -> &'static str {
        match self {
            SolvePath::Sdp => "sdp",
            SolvePath::Socp => "socp",
            SolvePath::ClosedForm => "closed_form",
        }
    }
}

/// Strategy-specific precoders.
#[derive(Debug, Clone)]
pub enum Precoders {
    Af { relay: CMat, su: CVec },
    DfXor { relay: CVec, su: CVec },
    DfSup { relay_a: CVec, relay_b: CVec, su: CVec },
}

impl Precoders {
    pub fn su_beamformer(&self) -> &CVec {
        match self {
            Precoders::Af { su, .. } | Precoders::DfXor { su, .. } | Precoders::DfSup { su, .. } => {
                su
            }
        }
    }
}

/// One strategy's optimal design for one channel realization.
#[derive(Debug, Clone)]
pub struct PrecoderDesign {
    pub strategy: Strategy,
    pub precoders: Precoders,
    pub su_sinr: f64,
    pub su_rate: f64,
    pub pu_sinr: [f64; 2],
    /// Power consumed for relaying the primary signals.
    pub relay_power: f64,
    /// Power of the secondary beamformer, Tr(Q_s).
    pub su_power: f64,
    pub path: SolvePath,
    pub iterations: usize,
}

impl PrecoderDesign {
    pub fn total_power(&self) -> f64 {
        self.relay_power + self.su_power
    }
}

/// Rates and SINRs recomputed from the physical beamformers.
#[derive(Debug, Clone, Copy)]
pub struct RateReport {
    pub su_sinr: f64,
    pub su_rate: f64,
    pub pu_sinr: [f64; 2],
    pub pu_rates: [f64; 2],
}

fn half_log2(sinr: f64) -> f64 {
    0.5 * (1.0 + sinr).log2()
}


/// |g^T x|^2 for a channel row against a beamformer.
fn gain_sq(g: &CVec, x: &CVec) -> f64 {
    g.dot(x).norm_sqr()
}

/// Can the relay jointly decode both primary streams? Evaluates the
/// multiple-access region bounds; note the sum bound weighs both outer
/// products with P_A/sigma2_C unless `mac_sum_uses_pb` is set.
pub fn mac_region_check(real: &NetworkRealization, reqs: &RateRequirements) -> bool {
    let p = &real.params;
    let ca = p.p_a * real.h_a.norm_squared() / p.sigma2_c;
    let cb = p.p_b * real.h_b.norm_squared() / p.sigma2_c;
    if reqs.r_a > (1.0 + ca).log2() || reqs.r_b > (1.0 + cb).log2() {
        return false;
    }
    let wa = p.p_a / p.sigma2_c;
    let wb = if p.mac_sum_uses_pb { p.p_b } else { p.p_a } / p.sigma2_c;
    // det(I + wa h_a h_a^H + wb h_b h_b^H) via the rank-two identity.
    let na = real.h_a.norm_squared();
    let nb = real.h_b.norm_squared();
    let cross = real.h_a.dotc(&real.h_b).norm_sqr();
    let det = (1.0 + wa * na) * (1.0 + wb * nb) - wa * wb * cross;
    reqs.r_a + reqs.r_b <= det.log2()
}

/// Successive interference cancellation at the secondary receiver during
/// phase one: the stronger received primary signal is decoded first
/// against the weaker plus noise, then (if decoded) canceled before the
/// weaker one is tested.
pub fn sic_decode_indicators(
    real: &NetworkRealization,
    reqs: &RateRequirements,
) -> DecodeIndicators {
    let p = &real.params;
    let pow_a = p.p_a * real.h_ad.norm_sqr();
    let pow_b = p.p_b * real.h_bd.norm_sqr();
    // Ties decode A first for determinism.
    let a_first = pow_a >= pow_b;
    let (strong, weak, r_strong, r_weak) = if a_first {
        (pow_a, pow_b, reqs.r_a, reqs.r_b)
    } else {
        (pow_b, pow_a, reqs.r_b, reqs.r_a)
    };
    let strong_ok = (1.0 + strong / (weak + p.sigma2_d)).log2() >= r_strong;
    let weak_ok = if strong_ok {
        (1.0 + weak / p.sigma2_d).log2() >= r_weak
    } else {
        (1.0 + weak / (strong + p.sigma2_d)).log2() >= r_weak
    };
    let (ok_a, ok_b) = if a_first {
        (strong_ok, weak_ok)
    } else {
        (weak_ok, strong_ok)
    };
    DecodeIndicators {
        a_a: !ok_a,
        a_b: !ok_b,
    }
}

/// Orthonormal bases of the downlink channel span, in the two orderings
/// the designs need.
#[derive(Debug, Clone)]
pub struct BasisU {
    /// Basis of span{g_D*, g_A*, g_B*}, built in that order.
    pub u: CMat,
    pub n: usize,
    /// Rows g_i^T U, stored as length-N vectors.
    pub t_d: CVec,
    pub t_a: CVec,
    pub t_b: CVec,
    pub pair: PairBasis,
}

/// Pair-first ordering used by the interference-cancelation path: the
/// first columns span {g_A*, g_B*}.
#[derive(Debug, Clone)]
pub struct PairBasis {
    pub u: CMat,
    pub n: usize,
    /// Dimension of span{g_A*, g_B*} alone.
    pub n_pair: usize,
    pub t_d: CVec,
    pub t_a: CVec,
    pub t_b: CVec,
    /// Phase of g_A^T g_B^*.
    pub theta: f64,
    /// G = [g_A^*, e^{-i theta} g_B^*].
    pub g_mat: CMat,
    /// a_A = [||g_A||^2, |g_A^T g_B^*|].
    pub a_a: [f64; 2],
    /// a_B = [|g_B^T g_A^*|, ||g_B||^2].
    pub a_b: [f64; 2],
}

fn t_rows(u: &CMat, real: &NetworkRealization) -> (CVec, CVec, CVec) {
    // g^T U as a length-N vector: U^T g.
    let t = |g: &CVec| u.transpose() * g;
    (t(&real.g_d), t(&real.g_a), t(&real.g_b))
}

/// Rank-one Hermitian t^H t from a stored t-row.
pub(crate) fn t_outer(t: &CVec) -> CMat {
    t.conjugate() * t.transpose()
}

pub fn build_basis(real: &NetworkRealization) -> Result<BasisU, DesignError> {
    let gd_c = real.g_d.conjugate();
    let ga_c = real.g_a.conjugate();
    let gb_c = real.g_b.conjugate();

    let u = orthonormal_basis(&[gd_c.clone(), ga_c.clone(), gb_c.clone()], RANK_TOL)?;
    let (t_d, t_a, t_b) = t_rows(&u, real);

    let u2 = orthonormal_basis(&[ga_c.clone(), gb_c.clone(), gd_c], RANK_TOL)?;
    let n_pair = match orthonormal_basis(&[ga_c.clone(), gb_c.clone()], RANK_TOL) {
        Ok(b) => b.ncols(),
        Err(KernelError::DegenerateSpan) => 0,
        Err(e) => return Err(e.into()),
    };
    let (t_d2, t_a2, t_b2) = t_rows(&u2, real);
    let cross = real.g_a.dot(&gb_c);
    let theta = if cross.norm() > 0.0 { cross.arg() } else { 0.0 };
    let phase = C64::from_polar(1.0, -theta);
    let mut g_mat = CMat::zeros(real.g_a.len(), 2);
    g_mat.set_column(0, &ga_c);
    g_mat.set_column(1, &(gb_c * phase));

    let pair = PairBasis {
        n: u2.ncols(),
        n_pair,
        t_d: t_d2,
        t_a: t_a2,
        t_b: t_b2,
        theta,
        g_mat,
        a_a: [real.g_a.norm_squared(), cross.norm()],
        a_b: [cross.norm(), real.g_b.norm_squared()],
        u: u2,
    };

    Ok(BasisU {
        n: u.ncols(),
        t_d,
        t_a,
        t_b,
        u,
        pair,
    })
}

/// Physical SINRs and rates of a design under the given phase-one decode
/// indicators.
pub fn evaluate_rates(
    design: &PrecoderDesign,
    real: &NetworkRealization,
    ind: &DecodeIndicators,
) -> RateReport {
    let p = &real.params;
    let (su_sinr, pu_a, pu_b) = match &design.precoders {
        Precoders::Af { relay, su } => {
            let wha = relay * &real.h_a;
            let whb = relay * &real.h_b;
            let gdw = relay.transpose() * &real.g_d;
            let gaw = relay.transpose() * &real.g_a;
            let gbw = relay.transpose() * &real.g_b;
            let su_den = DecodeIndicators::coef(ind.a_a) * p.p_a * gain_sq(&real.g_d, &wha)
                + DecodeIndicators::coef(ind.a_b) * p.p_b * gain_sq(&real.g_d, &whb)
                + p.sigma2_c * gdw.norm_squared()
                + p.sigma2_d;
            let su = gain_sq(&real.g_d, su) / su_den;
            let a = p.p_b * gain_sq(&real.g_a, &whb)
                / (gain_sq(&real.g_a, design.precoders.su_beamformer())
                    + p.sigma2_c * gaw.norm_squared()
                    + p.sigma2_a);
            let b = p.p_a * gain_sq(&real.g_b, &wha)
                / (gain_sq(&real.g_b, design.precoders.su_beamformer())
                    + p.sigma2_c * gbw.norm_squared()
                    + p.sigma2_b);
            (su, a, b)
        }
        Precoders::DfXor { relay, su } => {
            let canceled = ind.both_decoded();
            let su_den = if canceled {
                p.sigma2_d
            } else {
                gain_sq(&real.g_d, relay) + p.sigma2_d
            };
            let su_val = gain_sq(&real.g_d, su) / su_den;
            let a = gain_sq(&real.g_a, relay) / (gain_sq(&real.g_a, su) + p.sigma2_a);
            let b = gain_sq(&real.g_b, relay) / (gain_sq(&real.g_b, su) + p.sigma2_b);
            (su_val, a, b)
        }
        Precoders::DfSup { relay_a, relay_b, su } => {
            let mut su_den = p.sigma2_d;
            if ind.a_a {
                su_den += gain_sq(&real.g_d, relay_a);
            }
            if ind.a_b {
                su_den += gain_sq(&real.g_d, relay_b);
            }
            let su_val = gain_sq(&real.g_d, su) / su_den;
            // PU A decodes the stream re-encoding s_B and vice versa.
            let a = gain_sq(&real.g_a, relay_b) / (gain_sq(&real.g_a, su) + p.sigma2_a);
            let b = gain_sq(&real.g_b, relay_a) / (gain_sq(&real.g_b, su) + p.sigma2_b);
            (su_val, a, b)
        }
    };
    RateReport {
        su_sinr,
        su_rate: half_log2(su_sinr),
        pu_sinr: [pu_a, pu_b],
        pu_rates: [half_log2(pu_a), half_log2(pu_b)],
    }
}

/// Absolute slack allowed on the per-PU SINR thresholds and on the power
/// budget when validating a recovered design.
pub(crate) const FEAS_SLACK: f64 = 1e-6;

/// Shared tail of every design routine: recompute rates from the physical
/// beamformers, compute the power split, and enforce the feasibility
/// contract.
#[allow(clippy::too_many_arguments)]
pub(crate) fn finish_design(
    strategy: Strategy,
    precoders: Precoders,
    real: &NetworkRealization,
    ind: &DecodeIndicators,
    thresholds: [f64; 2],
    path: SolvePath,
    iterations: usize,
) -> Result<PrecoderDesign, DesignError> {
    let p = &real.params;
    let su_power = precoders.su_beamformer().norm_squared();
    let relay_power = match &precoders {
        Precoders::Af { relay, .. } => {
            p.p_a * (relay * &real.h_a).norm_squared()
                + p.p_b * (relay * &real.h_b).norm_squared()
                + p.sigma2_c * relay.norm_squared()
        }
        Precoders::DfXor { relay, .. } => relay.norm_squared(),
        Precoders::DfSup { relay_a, relay_b, .. } => {
            relay_a.norm_squared() + relay_b.norm_squared()
        }
    };
    let mut design = PrecoderDesign {
        strategy,
        precoders,
        su_sinr: 0.0,
        su_rate: 0.0,
        pu_sinr: [0.0; 2],
        relay_power,
        su_power,
        path,
        iterations,
    };
    let report = evaluate_rates(&design, real, ind);
    design.su_sinr = report.su_sinr;
    design.su_rate = report.su_rate;
    design.pu_sinr = report.pu_sinr;

    if design.total_power() > p.p_c + FEAS_SLACK * (1.0 + p.p_c) {
        return Err(DesignError::NumericalFailure(format!(
            "power budget violated: {} > {}",
            design.total_power(),
            p.p_c
        )));
    }
    for (k, &tau) in thresholds.iter().enumerate() {
        if design.pu_sinr[k] < tau - FEAS_SLACK * (1.0 + tau) {
            return Err(DesignError::NumericalFailure(format!(
                "PU SINR {} fell below threshold {tau}",
                design.pu_sinr[k]
            )));
        }
    }
    Ok(design)
}

/// The no-primary-demand design: all power into the secondary beam along
/// the matched direction, nothing relayed.
pub(crate) fn all_power_to_su(
    strategy: Strategy,
    real: &NetworkRealization,
    ind: &DecodeIndicators,
) -> Result<PrecoderDesign, DesignError> {
    let p = &real.params;
    let m = p.m;
    let gd_norm = real.g_d.norm();
    let su = if gd_norm > 0.0 {
        real.g_d.conjugate() * C64::new(p.p_c.sqrt() / gd_norm, 0.0)
    } else {
        CVec::zeros(m)
    };
    let precoders = match strategy {
        Strategy::Af => Precoders::Af {
            relay: CMat::zeros(m, m),
            su,
        },
        Strategy::DfXor => Precoders::DfXor {
            relay: CVec::zeros(m),
            su,
        },
        Strategy::DfSup => Precoders::DfSup {
            relay_a: CVec::zeros(m),
            relay_b: CVec::zeros(m),
            su,
        },
    };
    finish_design(
        strategy,
        precoders,
        real,
        ind,
        [0.0, 0.0],
        SolvePath::ClosedForm,
        0,
    )
}

/// Recover the dominant beamformer from a (numerically) rank-one Hermitian
/// block, scaled by 1/sqrt(z).
pub(crate) fn beamformer_from_block(block: &CMat, z: f64) -> Result<CVec, DesignError> {
    let eig = crate::numkernel::hermitian_eig(block, RANK_TOL)?;
    if eig.values[0] <= 0.0 {
        return Ok(CVec::zeros(block.nrows()));
    }
    let col: CVec = eig.vectors.column(0).into_owned();
    Ok(col * C64::new((eig.values[0] / z).sqrt(), 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::SystemParams;
    use approx::assert_relative_eq;

    pub(crate) fn unit_params(m: usize, p_c: f64) -> SystemParams {
        SystemParams {
            m,
            p_a: 1.0,
            p_b: 1.0,
            p_c,
            sigma2_a: 1.0,
            sigma2_b: 1.0,
            sigma2_c: 1.0,
            sigma2_d: 1.0,
            atten: 1.0,
            exponent: 3.0,
            mac_sum_uses_pb: false,
        }
    }

    pub(crate) fn manual_realization(
        params: SystemParams,
        h_a: CVec,
        h_b: CVec,
        g_a: CVec,
        g_b: CVec,
        g_d: CVec,
        h_ad: C64,
        h_bd: C64,
    ) -> NetworkRealization {
        NetworkRealization {
            params,
            h_a,
            h_b,
            g_a,
            g_b,
            g_d,
            h_ad,
            h_bd,
        }
    }

    fn e(n: usize, k: usize) -> CVec {
        let mut v = CVec::zeros(n);
        v[k] = C64::new(1.0, 0.0);
        v
    }

    #[test]
    fn requirements_thresholds_swap_indices() {
        let r = RateRequirements::new(1.0, 0.5).unwrap();
        assert_relative_eq!(r.tau_a, 2.0f64.powf(1.0) - 1.0); // from r_b
        assert_relative_eq!(r.tau_b, 2.0f64.powf(2.0) - 1.0); // from r_a
        assert_relative_eq!(r.gamma, 3.0);
        assert!(RateRequirements::new(-0.1, 0.0).is_err());
    }

    #[test]
    fn mac_region_examples() {
        let p = unit_params(2, 10.0);
        let real = manual_realization(
            p,
            e(2, 0),
            e(2, 0),
            e(2, 0),
            e(2, 0),
            e(2, 0),
            C64::new(1.0, 0.0),
            C64::new(1.0, 0.0),
        );
        // Bounds: 1, 1, log2(3).
        let ok = RateRequirements::new(0.5, 0.5).unwrap();
        assert!(mac_region_check(&real, &ok));
        let too_much = RateRequirements::new(0.9, 0.9).unwrap();
        assert!(!mac_region_check(&real, &too_much));
        let zero = RateRequirements::new(0.0, 0.0).unwrap();
        assert!(mac_region_check(&real, &zero));
    }

    #[test]
    fn sic_examples() {
        let p = unit_params(1, 10.0);
        let mk = |pa: f64, pb: f64| {
            manual_realization(
                p,
                e(1, 0),
                e(1, 0),
                e(1, 0),
                e(1, 0),
                e(1, 0),
                C64::new(pa.sqrt(), 0.0),
                C64::new(pb.sqrt(), 0.0),
            )
        };
        let real = mk(3.0, 1.0);
        let ind = sic_decode_indicators(&real, &RateRequirements::new(1.0, 1.0).unwrap());
        assert_eq!(ind, DecodeIndicators { a_a: false, a_b: false });

        let ind = sic_decode_indicators(&real, &RateRequirements::new(2.0, 1.0).unwrap());
        assert_eq!(ind, DecodeIndicators { a_a: true, a_b: true });

        let ind = sic_decode_indicators(&real, &RateRequirements::new(0.0, 0.0).unwrap());
        assert_eq!(ind, DecodeIndicators { a_a: false, a_b: false });
    }

    #[test]
    fn basis_collinear_and_orthogonal() {
        let p = unit_params(3, 10.0);
        let one = C64::new(1.0, 0.0);
        // Collinear: N = 1 and all t rows equal [1].
        let real = manual_realization(
            p,
            e(3, 0),
            e(3, 0),
            e(3, 0),
            e(3, 0),
            e(3, 0),
            one,
            one,
        );
        let b = build_basis(&real).unwrap();
        assert_eq!(b.n, 1);
        assert_relative_eq!(b.t_d[0].re, 1.0, max_relative = 1e-12);
        assert_relative_eq!(b.t_a[0].re, 1.0, max_relative = 1e-12);

        // Orthogonal: N = 3.
        let real = manual_realization(
            unit_params(3, 10.0),
            e(3, 0),
            e(3, 0),
            e(3, 0),
            e(3, 1),
            e(3, 2),
            one,
            one,
        );
        let b = build_basis(&real).unwrap();
        assert_eq!(b.n, 3);
        assert_eq!(b.pair.n_pair, 2);

        // g_A = g_B = e1, g_D = e2: N = 2, pair span is one-dimensional and
        // comes first in the pair ordering.
        let real = manual_realization(
            unit_params(3, 10.0),
            e(3, 0),
            e(3, 0),
            e(3, 0),
            e(3, 0),
            e(3, 1),
            one,
            one,
        );
        let b = build_basis(&real).unwrap();
        assert_eq!(b.n, 2);
        assert_eq!(b.pair.n_pair, 1);
        let u1: CVec = b.pair.u.column(0).into_owned();
        let resid = &u1 - &(e(3, 0) * u1[0]);
        assert!(resid.norm() < 1e-12, "pair direction must lead");
    }

    #[test]
    fn rate_evaluation_trivia() {
        assert_relative_eq!(half_log2(3.0), 1.0);
        assert_relative_eq!(half_log2(0.0), 0.0);
    }
}
