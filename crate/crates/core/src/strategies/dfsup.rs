//! Decode-and-forward with superposition coding: the relay re-encodes each
//! primary stream separately (w_A carries s_A toward PU B, w_B carries s_B
//! toward PU A) and superimposes the secondary beam. Per-PU thresholds
//! tau_A, tau_B apply individually, which is what makes this strategy
//! flexible under asymmetric rate requirements.

use crate::channel::NetworkRealization;
use crate::fracrank::{
    rank_reduce, solve_fractional, FracConstraint, FracOutcome, FractionalSdpSpec,
    PreservedFunctional,
};
use crate::numkernel::{hermitian_eig, inv_sqrt_psd, CMat, CVec, C64, RANK_TOL};

use super::{
    all_power_to_su, beamformer_from_block, build_basis, finish_design, t_outer, BasisU,
    DecodeIndicators, DesignError, DesignOptions, DesignOutcome, PrecoderDesign, Precoders,
    RateRequirements, SolvePath, Strategy,
};

/// Which primary streams the secondary receiver cancels in phase two; only
/// decoded streams are admissible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CancelSet {
    None,
    A,
    B,
    Both,
}

impl CancelSet {
    pub fn cancels_a(&self) -> bool {
        matches!(self, CancelSet::A | CancelSet::Both)
    }
    pub fn cancels_b(&self) -> bool {
        matches!(self, CancelSet::B | CancelSet::Both)
    }

    /// Largest admissible set under the given indicators.
    pub fn maximal(ind: &DecodeIndicators) -> CancelSet {
        match (ind.a_a, ind.a_b) {
            (false, false) => CancelSet::Both,
            (false, true) => CancelSet::A,
            (true, false) => CancelSet::B,
            (true, true) => CancelSet::None,
        }
    }
}

/// Joint design of both re-encoded primary beams and the secondary beam.
pub fn design_dfsup(
    real: &NetworkRealization,
    reqs: &RateRequirements,
    ind: &DecodeIndicators,
    canceled: CancelSet,
    opts: &DesignOptions,
) -> Result<DesignOutcome, DesignError> {
    if (canceled.cancels_a() && ind.a_a) || (canceled.cancels_b() && ind.a_b) {
        return Err(DesignError::ContractViolation(
            "cannot cancel a stream the secondary receiver did not decode".into(),
        ));
    }
    let (tau_a, tau_b) = (reqs.tau_a, reqs.tau_b);
    if tau_a <= 0.0 && tau_b <= 0.0 {
        return Ok(DesignOutcome::Feasible(all_power_to_su(
            Strategy::DfSup,
            real,
            ind,
        )?));
    }
    let basis = build_basis(real)?;

    let design = if canceled == CancelSet::Both && !opts.force_numeric {
        both_canceled_closed_form(real, &basis, reqs, ind)?
    } else if basis.n == 1 && !opts.force_numeric && canceled != CancelSet::Both {
        // With parallel channels the optimum does not depend on which
        // interference terms survive at the secondary receiver.
        parallel_closed_form(real, &basis, reqs, ind)?
    } else {
        fractional_route(real, &basis, reqs, ind, canceled, opts)?
    };
    match design {
        Some(d) => Ok(DesignOutcome::Feasible(d)),
        None => Ok(DesignOutcome::Infeasible),
    }
}

/// N = 1: scalar powers with all constraints active,
/// q = (P_C - tau_B s2_B/t_B - tau_A s2_A/t_A)/(tau_A + tau_B + 1),
/// w_A = q tau_B + tau_B s2_B/t_B, w_B = q tau_A + tau_A s2_A/t_A.
fn parallel_closed_form(
    real: &NetworkRealization,
    basis: &BasisU,
    reqs: &RateRequirements,
    ind: &DecodeIndicators,
) -> Result<Option<PrecoderDesign>, DesignError> {
    let p = &real.params;
    let u1: CVec = basis.u.column(0).into_owned();
    let t_a = real.g_a.dot(&u1).norm_sqr();
    let t_b = real.g_b.dot(&u1).norm_sqr();
    if (reqs.tau_a > 0.0 && t_a <= 0.0) || (reqs.tau_b > 0.0 && t_b <= 0.0) {
        return Ok(None);
    }
    let cost_a = if reqs.tau_a > 0.0 {
        reqs.tau_a * p.sigma2_a / t_a
    } else {
        0.0
    };
    let cost_b = if reqs.tau_b > 0.0 {
        reqs.tau_b * p.sigma2_b / t_b
    } else {
        0.0
    };
    let residue = p.p_c - cost_a - cost_b;
    if residue <= 0.0 {
        return Ok(None);
    }
    let q = residue / (reqs.tau_a + reqs.tau_b + 1.0);
    let w_a = q * reqs.tau_b + cost_b;
    let w_b = q * reqs.tau_a + cost_a;
    let su = &u1 * C64::new(q.sqrt(), 0.0);
    let relay_a = &u1 * C64::new(w_a.sqrt(), 0.0);
    let relay_b = &u1 * C64::new(w_b.sqrt(), 0.0);
    finish_design(
        Strategy::DfSup,
        Precoders::DfSup {
            relay_a,
            relay_b,
            su,
        },
        real,
        ind,
        [reqs.tau_a, reqs.tau_b],
        SolvePath::ClosedForm,
        0,
    )
    .map(Some)
}

/// Both interference terms canceled at the secondary receiver: matched
/// beams w_A = sqrt(w_A) g_B^*, w_B = sqrt(w_B) g_A^* and a generalized
/// eigenvector for q. Covers every span dimension.
fn both_canceled_closed_form(
    real: &NetworkRealization,
    basis: &BasisU,
    reqs: &RateRequirements,
    ind: &DecodeIndicators,
) -> Result<Option<PrecoderDesign>, DesignError> {
    let p = &real.params;
    let na = real.g_a.norm_squared();
    let nb = real.g_b.norm_squared();
    if (reqs.tau_a > 0.0 && na <= 0.0) || (reqs.tau_b > 0.0 && nb <= 0.0) {
        return Ok(None);
    }
    let cost_a = if reqs.tau_a > 0.0 {
        reqs.tau_a * p.sigma2_a / na
    } else {
        0.0
    };
    let cost_b = if reqs.tau_b > 0.0 {
        reqs.tau_b * p.sigma2_b / nb
    } else {
        0.0
    };
    let residue = p.p_c - cost_a - cost_b;
    if residue <= 0.0 {
        return Ok(None);
    }
    let n = basis.n;
    let mut d_mat = CMat::identity(n, n);
    if reqs.tau_a > 0.0 {
        d_mat += t_outer(&basis.t_a).scale(reqs.tau_a / na);
    }
    if reqs.tau_b > 0.0 {
        d_mat += t_outer(&basis.t_b).scale(reqs.tau_b / nb);
    }
    let c_mat = t_outer(&basis.t_d);
    let d_isqrt = inv_sqrt_psd(&d_mat, RANK_TOL)?;
    let core = &d_isqrt * &c_mat * &d_isqrt;
    let eig = hermitian_eig(&core, RANK_TOL)?;
    let v: CVec = eig.vectors.column(0).into_owned();
    let q_coef = &d_isqrt * v * C64::new(residue.sqrt(), 0.0);

    let tq_a = basis.t_a.dot(&q_coef).norm_sqr();
    let tq_b = basis.t_b.dot(&q_coef).norm_sqr();
    let w_a = if reqs.tau_b > 0.0 {
        reqs.tau_b * (tq_b + p.sigma2_b) / (nb * nb)
    } else {
        0.0
    };
    let w_b = if reqs.tau_a > 0.0 {
        reqs.tau_a * (tq_a + p.sigma2_a) / (na * na)
    } else {
        0.0
    };
    let relay_a = real.g_b.conjugate() * C64::new(w_a.sqrt(), 0.0);
    let relay_b = real.g_a.conjugate() * C64::new(w_b.sqrt(), 0.0);
    let su = &basis.u * q_coef;
    finish_design(
        Strategy::DfSup,
        Precoders::DfSup {
            relay_a,
            relay_b,
            su,
        },
        real,
        ind,
        [reqs.tau_a, reqs.tau_b],
        SolvePath::ClosedForm,
        0,
    )
    .map(Some)
}

/// Generic route: fractional SDP over up to three rank-one blocks in span
/// coordinates, with the interference terms of the objective selected by
/// the cancel set.
fn fractional_route(
    real: &NetworkRealization,
    basis: &BasisU,
    reqs: &RateRequirements,
    ind: &DecodeIndicators,
    canceled: CancelSet,
    opts: &DesignOptions,
) -> Result<Option<PrecoderDesign>, DesignError> {
    let p = &real.params;
    let n = basis.n;
    let c_d = t_outer(&basis.t_d);
    let c_a = t_outer(&basis.t_a);
    let c_b = t_outer(&basis.t_b);
    let eye = CMat::identity(n, n);

    // Streams with a zero threshold on their intended receiver carry no
    // power at the optimum; drop their blocks up front.
    let use_wa = reqs.tau_b > 0.0;
    let use_wb = reqs.tau_a > 0.0;
    // Block order: q, then w_A (if any), then w_B (if any).
    let mut dims = vec![n];
    let mut idx_wa = None;
    let mut idx_wb = None;
    if use_wa {
        idx_wa = Some(dims.len());
        dims.push(n);
    }
    if use_wb {
        idx_wb = Some(dims.len());
        dims.push(n);
    }
    let blocks = dims.len();
    let coeffs = |entries: Vec<(usize, CMat)>| -> Vec<Option<CMat>> {
        let mut v: Vec<Option<CMat>> = vec![None; blocks];
        for (i, m) in entries {
            v[i] = Some(m);
        }
        v
    };

    let mut denominator: Vec<Option<CMat>> = vec![None; blocks];
    if let Some(i) = idx_wa {
        if !canceled.cancels_a() {
            denominator[i] = Some(c_d.clone());
        }
    }
    if let Some(i) = idx_wb {
        if !canceled.cancels_b() {
            denominator[i] = Some(c_d.clone());
        }
    }

    let mut constraints = Vec::new();
    if let Some(i) = idx_wb {
        // PU A decodes s_B through w_B.
        constraints.push(FracConstraint {
            coeffs: coeffs(vec![
                (0, -&c_a),
                (i, c_a.scale(1.0 / reqs.tau_a)),
            ]),
            rhs: p.sigma2_a,
        });
    }
    if let Some(i) = idx_wa {
        constraints.push(FracConstraint {
            coeffs: coeffs(vec![
                (0, -&c_b),
                (i, c_b.scale(1.0 / reqs.tau_b)),
            ]),
            rhs: p.sigma2_b,
        });
    }

    let spec = FractionalSdpSpec {
        block_dims: dims.clone(),
        numerator: coeffs(vec![(0, c_d.clone())]),
        denominator: denominator.clone(),
        denominator_const: p.sigma2_d,
        constraints: constraints.clone(),
        budget: (0..blocks).map(|_| Some(eye.clone())).collect(),
        budget_limit: p.p_c,
    };
    let cc = match solve_fractional(&spec, &opts.solver)? {
        FracOutcome::Solved(cc) => cc,
        FracOutcome::Infeasible => return Ok(None),
    };
    let mut functionals: Vec<PreservedFunctional> = vec![denominator];
    for c in &constraints {
        functionals.push(c.coeffs.clone());
    }
    functionals.push((0..blocks).map(|_| Some(eye.clone())).collect());
    let reduced = rank_reduce(&cc.scaled_blocks, &functionals, RANK_TOL)?;

    let q_coef = beamformer_from_block(&reduced[0], cc.z)?;
    let su = &basis.u * q_coef;
    let relay_a = match idx_wa {
        Some(i) => &basis.u * beamformer_from_block(&reduced[i], cc.z)?,
        None => CVec::zeros(p.m),
    };
    let relay_b = match idx_wb {
        Some(i) => &basis.u * beamformer_from_block(&reduced[i], cc.z)?,
        None => CVec::zeros(p.m),
    };
    finish_design(
        Strategy::DfSup,
        Precoders::DfSup {
            relay_a,
            relay_b,
            su,
        },
        real,
        ind,
        [reqs.tau_a, reqs.tau_b],
        SolvePath::Sdp,
        cc.iterations,
    )
    .map(Some)
}
