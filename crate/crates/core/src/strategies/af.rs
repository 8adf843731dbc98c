//! Amplify-and-forward design: the relay applies a linear matrix W to its
//! received vector and superimposes the secondary beam. The joint problem
//! over (W, q) is a linear-fractional SDP in X = q q^H and Y = w w^H with
//! w = vec(W), solved through the Charnes-Cooper transformation and
//! reduced to rank one afterwards.

use crate::channel::NetworkRealization;
use crate::fracrank::{
    rank_reduce, solve_fractional, FracConstraint, FracOutcome, FractionalSdpSpec,
    PreservedFunctional,
};
use crate::numkernel::{kron, unvec, CMat, RANK_TOL};

use super::{
    all_power_to_su, beamformer_from_block, build_basis, evaluate_rates, finish_design, t_outer,
    DecodeIndicators, DesignError, DesignOptions, DesignOutcome, Precoders,
    RateRequirements, SolvePath, Strategy,
};

struct AfMatrices {
    /// Numerator coefficient on X: t_D^H t_D.
    q01: CMat,
    /// Denominator coefficient on Y.
    q02: CMat,
    /// Power coefficient on Y.
    q_pow: CMat,
    /// Per-active-PU rows: (X coefficient, Y coefficient, noise rhs, threshold).
    rows: Vec<AfRow>,
}

struct AfRow {
    x_coeff: CMat,
    y_coeff: CMat,
    rhs: f64,
}

fn assemble(
    real: &NetworkRealization,
    reqs: &RateRequirements,
    ind: &DecodeIndicators,
    basis: &super::BasisU,
) -> AfMatrices {
    let p = &real.params;
    let m = p.m;
    let eye = CMat::identity(m, m);

    let outer = |v: &crate::numkernel::CVec| -> CMat { v * v.adjoint() };
    let gd_cross = real.g_d.conjugate() * real.g_d.transpose().clone_owned();
    let ga_cross = real.g_a.conjugate() * real.g_a.transpose().clone_owned();
    let gb_cross = real.g_b.conjugate() * real.g_b.transpose().clone_owned();

    // Q02 = (a_A P_A h_A h_A^H + a_B P_B h_B h_B^H + s2_C I)^T kron (g_D^* g_D^T)
    let fwd = outer(&real.h_a).scale(DecodeIndicators::coef(ind.a_a) * p.p_a)
        + outer(&real.h_b).scale(DecodeIndicators::coef(ind.a_b) * p.p_b)
        + eye.scale(p.sigma2_c);
    let q02 = kron(&fwd.transpose(), &gd_cross);

    // Q = (P_A h_A h_A^H + P_B h_B h_B^H + s2_C I)^T kron I
    let drive = outer(&real.h_a).scale(p.p_a) + outer(&real.h_b).scale(p.p_b) + eye.scale(p.sigma2_c);
    let q_pow = kron(&drive.transpose(), &eye);

    let mut rows = Vec::new();
    // PU A decodes s_B: numerator P_B |g_A^T W h_B|^2.
    let mut push_row = |tau: f64,
                        h_src: &crate::numkernel::CVec,
                        p_src: f64,
                        g_cross: &CMat,
                        t_row: &crate::numkernel::CVec,
                        sigma2: f64| {
        if tau <= 0.0 {
            return;
        }
        let q1 = kron(&outer(h_src).transpose(), g_cross).scale(p_src);
        let q3 = kron(&eye, g_cross).scale(p.sigma2_c);
        let y_coeff = q1.scale(1.0 / tau) - q3;
        rows.push(AfRow {
            x_coeff: -t_outer(t_row),
            y_coeff,
            rhs: sigma2,
        });
    };
    push_row(reqs.tau_a, &real.h_b, p.p_b, &ga_cross, &basis.t_a, p.sigma2_a);
    push_row(reqs.tau_b, &real.h_a, p.p_a, &gb_cross, &basis.t_b, p.sigma2_b);

    AfMatrices {
        q01: t_outer(&basis.t_d),
        q02,
        q_pow,
        rows,
    }
}

/// Joint design of the relay matrix and secondary beamformer under
/// amplify-and-forward.
pub fn design_af(
    real: &NetworkRealization,
    reqs: &RateRequirements,
    ind: &DecodeIndicators,
    opts: &DesignOptions,
) -> Result<DesignOutcome, DesignError> {
    let p = &real.params;
    if reqs.tau_a <= 0.0 && reqs.tau_b <= 0.0 {
        return Ok(DesignOutcome::Feasible(all_power_to_su(
            Strategy::Af,
            real,
            ind,
        )?));
    }
    let basis = build_basis(real)?;
    let mats = assemble(real, reqs, ind, &basis);
    let m = p.m;
    let n = basis.n;

    let spec = FractionalSdpSpec {
        block_dims: vec![n, m * m],
        numerator: vec![Some(mats.q01.clone()), None],
        denominator: vec![None, Some(mats.q02.clone())],
        denominator_const: p.sigma2_d,
        constraints: mats
            .rows
            .iter()
            .map(|r| FracConstraint {
                coeffs: vec![Some(r.x_coeff.clone()), Some(r.y_coeff.clone())],
                rhs: r.rhs,
            })
            .collect(),
        budget: vec![Some(CMat::identity(n, n)), Some(mats.q_pow.clone())],
        budget_limit: p.p_c,
    };

    let cc = match solve_fractional(&spec, &opts.solver)? {
        FracOutcome::Solved(cc) => cc,
        FracOutcome::Infeasible => return Ok(DesignOutcome::Infeasible),
    };

    // Preserve the normalization row, every SINR row and the power row
    // while reducing both scaled blocks to rank one.
    let mut functionals: Vec<PreservedFunctional> =
        vec![vec![None, Some(mats.q02.clone())]];
    for r in &mats.rows {
        functionals.push(vec![Some(r.x_coeff.clone()), Some(r.y_coeff.clone())]);
    }
    functionals.push(vec![Some(CMat::identity(n, n)), Some(mats.q_pow.clone())]);
    let reduced = rank_reduce(&cc.scaled_blocks, &functionals, RANK_TOL)?;

    let q_coef = beamformer_from_block(&reduced[0], cc.z)?;
    let w_vec = beamformer_from_block(&reduced[1], cc.z)?;
    let relay = unvec(&w_vec, m, m);
    let su = &basis.u * &q_coef;

    let design = finish_design(
        Strategy::Af,
        Precoders::Af { relay, su },
        real,
        ind,
        [reqs.tau_a, reqs.tau_b],
        SolvePath::Sdp,
        cc.iterations,
    )?;

    // The recovered SINR must reproduce the fractional optimum.
    let report = evaluate_rates(&design, real, ind);
    if (report.su_sinr - cc.objective).abs() > 1e-6 * (1.0 + cc.objective.abs()) {
        return Err(DesignError::NumericalFailure(format!(
            "recovered SINR {} drifted from objective {}",
            report.su_sinr, cc.objective
        )));
    }
    Ok(DesignOutcome::Feasible(design))
}

/// The fractional program design_af solves, exposed so cross-checks can
/// run the bisection oracle on the exact same instance.
pub fn af_fractional_spec(
    real: &NetworkRealization,
    reqs: &RateRequirements,
    ind: &DecodeIndicators,
) -> Result<FractionalSdpSpec, DesignError> {
    let basis = build_basis(real)?;
    let mats = assemble(real, reqs, ind, &basis);
    let p = &real.params;
    let n = basis.n;
    Ok(FractionalSdpSpec {
        block_dims: vec![n, p.m * p.m],
        numerator: vec![Some(mats.q01), None],
        denominator: vec![None, Some(mats.q02)],
        denominator_const: p.sigma2_d,
        constraints: mats
            .rows
            .into_iter()
            .map(|r| FracConstraint {
                coeffs: vec![Some(r.x_coeff), Some(r.y_coeff)],
                rhs: r.rhs,
            })
            .collect(),
        budget: vec![Some(CMat::identity(n, n)), Some(mats.q_pow)],
        budget_limit: p.p_c,
    })
}
