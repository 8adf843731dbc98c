//! Decode-and-forward with XOR combining: the relay re-encodes the XORed
//! message as one beam w and superimposes the secondary beam q. Both PUs
//! must decode the combined stream, so a single threshold gamma derived
//! from max(R_A, R_B) applies at both.
//!
//! Without interference cancellation at the secondary receiver the problem
//! is a fractional SDP over the channel-span coefficients; with
//! cancellation it becomes an SOCP, and both degenerate channel layouts
//! admit closed forms.

use crate::channel::NetworkRealization;
use crate::conic::{solve, ProgramBuilder, Row, SolveStatus};
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

/// Joint design of the XOR beam and the secondary beam. `ic` selects the
/// interference-canceled objective and is only admissible when the
/// secondary receiver decoded both primary signals in phase one.
pub fn design_dfxor(
    real: &NetworkRealization,
    reqs: &RateRequirements,
    ind: &DecodeIndicators,
    ic: bool,
    opts: &DesignOptions,
) -> Result<DesignOutcome, DesignError> {
    if ic && !ind.both_decoded() {
        return Err(DesignError::ContractViolation(
            "interference cancellation requires both primary signals decoded at D".into(),
        ));
    }
    let gamma = reqs.gamma;
    if gamma <= 0.0 {
        return Ok(DesignOutcome::Feasible(all_power_to_su(
            Strategy::DfXor,
            real,
            ind,
        )?));
    }
    let basis = build_basis(real)?;

    let design = if !ic {
        if basis.n == 1 && !opts.force_numeric {
            match parallel_closed_form(real, &basis, gamma)? {
                Some(d) => d,
                None => return Ok(DesignOutcome::Infeasible),
            }
        } else {
            match fractional_route(real, &basis, gamma, ind, opts)? {
                Some(d) => d,
                None => return Ok(DesignOutcome::Infeasible),
            }
        }
    } else if opts.force_numeric || basis.pair.n_pair == 2 {
        match socp_route(real, &basis, gamma, ind, opts)? {
            Some(d) => d,
            None => return Ok(DesignOutcome::Infeasible),
        }
    } else if basis.n == 2 {
        // Parallel primary channels but an independent secondary direction.
        match pair_collinear_closed_form(real, &basis, gamma, ind)? {
            Some(d) => d,
            None => return Ok(DesignOutcome::Infeasible),
        }
    } else {
        match parallel_closed_form(real, &basis, gamma)? {
            Some(d) => d,
            None => return Ok(DesignOutcome::Infeasible),
        }
    };
    Ok(DesignOutcome::Feasible(design))
}

/// Fully parallel channels (N = 1): scalar powers q and w with both
/// constraints active,
/// q = (P_C - gamma d)/(gamma + 1), w = gamma q + gamma d,
/// d = max(s2_A/t_A, s2_B/t_B).
fn parallel_closed_form(
    real: &NetworkRealization,
    basis: &BasisU,
    gamma: f64,
) -> Result<Option<PrecoderDesign>, DesignError> {
    let p = &real.params;
    let u1: CVec = basis.u.column(0).into_owned();
    let t_a = real.g_a.dot(&u1).norm_sqr();
    let t_b = real.g_b.dot(&u1).norm_sqr();
    if t_a <= 0.0 || t_b <= 0.0 {
        // A primary receiver is unreachable but demands a positive rate.
        return Ok(None);
    }
    let d = (p.sigma2_a / t_a).max(p.sigma2_b / t_b);
    if p.p_c <= gamma * d {
        return Ok(None);
    }
    let q = (p.p_c - gamma * d) / (gamma + 1.0);
    let w = gamma * q + gamma * d;
    let su = &u1 * C64::new(q.sqrt(), 0.0);
    let relay = &u1 * C64::new(w.sqrt(), 0.0);
    // Evaluate under the no-cancellation indicators this form was derived
    // for; with cancellation the SU SINR only improves.
    let ind = DecodeIndicators { a_a: true, a_b: true };
    finish_design(
        Strategy::DfXor,
        Precoders::DfXor { relay, su },
        real,
        &ind,
        [gamma, gamma],
        SolvePath::ClosedForm,
        0,
    )
    .map(Some)
}

/// Pair span collinear, N = 2 with cancellation: w rides the pair
/// direction, q solves a two-dimensional generalized eigenproblem.
fn pair_collinear_closed_form(
    real: &NetworkRealization,
    basis: &BasisU,
    gamma: f64,
    ind: &DecodeIndicators,
) -> Result<Option<PrecoderDesign>, DesignError> {
    let p = &real.params;
    let pair = &basis.pair;
    debug_assert_eq!(pair.n, 2);
    let na = real.g_a.norm_squared();
    let nb = real.g_b.norm_squared();
    if na <= 0.0 || nb <= 0.0 {
        return Ok(None);
    }
    let d = (p.sigma2_a / na).max(p.sigma2_b / nb);
    if p.p_c <= gamma * d {
        return Ok(None);
    }
    let u_tilde = &pair.u; // columns [u1 (pair), u2]
    // A = U^H g_D^* g_D^T U, B = gamma b^H b + I with b = u1^H U = e1.
    let a_mat = t_outer(&pair.t_d);
    let mut b_mat = CMat::identity(2, 2);
    b_mat[(0, 0)] += C64::new(gamma, 0.0);
    let b_isqrt = inv_sqrt_psd(&b_mat, RANK_TOL)?;
    let core = &b_isqrt * &a_mat * &b_isqrt;
    let eig = hermitian_eig(&core, RANK_TOL)?;
    let v: CVec = eig.vectors.column(0).into_owned();
    let q_coef = &b_isqrt * v * C64::new((p.p_c - gamma * d).sqrt(), 0.0);
    let w = gamma * d + gamma * q_coef[0].norm_sqr();
    let u1: CVec = u_tilde.column(0).into_owned();
    let relay = &u1 * C64::new(w.sqrt(), 0.0);
    let su = u_tilde * &q_coef;
    finish_design(
        Strategy::DfXor,
        Precoders::DfXor { relay, su },
        real,
        ind,
        [gamma, gamma],
        SolvePath::ClosedForm,
        0,
    )
    .map(Some)
}

/// Generic no-cancellation route: fractional SDP over X = q q^H and
/// Y = w w^H in span coordinates, then rank reduction.
fn fractional_route(
    real: &NetworkRealization,
    basis: &BasisU,
    gamma: f64,
    ind: &DecodeIndicators,
    opts: &DesignOptions,
) -> Result<Option<PrecoderDesign>, DesignError> {
    let p = &real.params;
    let n = basis.n;
    let c_d = t_outer(&basis.t_d);
    let c_a = t_outer(&basis.t_a);
    let c_b = t_outer(&basis.t_b);
    let eye = CMat::identity(n, n);

    let spec = FractionalSdpSpec {
        block_dims: vec![n, n],
        numerator: vec![Some(c_d.clone()), None],
        denominator: vec![None, Some(c_d.clone())],
        denominator_const: p.sigma2_d,
        constraints: vec![
            FracConstraint {
                coeffs: vec![Some(-&c_a), Some(c_a.scale(1.0 / gamma))],
                rhs: p.sigma2_a,
            },
            FracConstraint {
                coeffs: vec![Some(-&c_b), Some(c_b.scale(1.0 / gamma))],
                rhs: p.sigma2_b,
            },
        ],
        budget: vec![Some(eye.clone()), Some(eye.clone())],
        budget_limit: p.p_c,
    };
    let cc = match solve_fractional(&spec, &opts.solver)? {
        FracOutcome::Solved(cc) => cc,
        FracOutcome::Infeasible => return Ok(None),
    };
    let functionals: Vec<PreservedFunctional> = vec![
        vec![None, Some(c_d)],
        vec![Some(-&c_a), Some(c_a.scale(1.0 / gamma))],
        vec![Some(-&c_b), Some(c_b.scale(1.0 / gamma))],
        vec![Some(eye.clone()), Some(eye)],
    ];
    let reduced = rank_reduce(&cc.scaled_blocks, &functionals, RANK_TOL)?;
    let q_coef = beamformer_from_block(&reduced[0], cc.z)?;
    let w_coef = beamformer_from_block(&reduced[1], cc.z)?;
    let su = &basis.u * q_coef;
    let relay = &basis.u * w_coef;
    finish_design(
        Strategy::DfXor,
        Precoders::DfXor { relay, su },
        real,
        ind,
        [gamma, gamma],
        SolvePath::Sdp,
        cc.iterations,
    )
    .map(Some)
}

/// Interference-canceled route as a second-order cone program over
/// w = (w_A, w_B) >= 0 and the complex span coefficients q.
fn socp_route(
    real: &NetworkRealization,
    basis: &BasisU,
    gamma: f64,
    ind: &DecodeIndicators,
    opts: &DesignOptions,
) -> Result<Option<PrecoderDesign>, DesignError> {
    let p = &real.params;
    let pair = &basis.pair;
    let n = pair.n;
    let m = p.m;

    let mut pb = ProgramBuilder::new();
    // Free complex coefficients, split into positive and negative parts:
    // 2n reals (re then im per component).
    let (qp, qm) = pb.free_pair(2 * n);
    let w = pb.nonneg(2);

    // Objective: maximize Re(t_D q).
    for k in 0..n {
        let (re, im) = (pair.t_d[k].re, pair.t_d[k].im);
        // Re(t q) = sum_k re_k qre_k - im_k qim_k.
        pb.objective(&qp, 2 * k, re);
        pb.objective(&qm, 2 * k, -re);
        pb.objective(&qp, 2 * k + 1, -im);
        pb.objective(&qm, 2 * k + 1, im);
    }

    // Per-PU cone: || (t_i q, sigma_i) || <= (a_i w)/sqrt(gamma).
    let sqrt_gamma = gamma.sqrt();
    for (t_row, a_row, sigma2) in [
        (&pair.t_a, &pair.a_a, p.sigma2_a),
        (&pair.t_b, &pair.a_b, p.sigma2_b),
    ] {
        let cone = pb.soc(4);
        let mut head = Row::new(0.0);
        head.entry(&cone, 0, 1.0)
            .entry(&w, 0, -a_row[0] / sqrt_gamma)
            .entry(&w, 1, -a_row[1] / sqrt_gamma);
        pb.equality(head);
        // Tail 1, 2: Re and Im of t_i q.
        for (tail, pick_re) in [(1usize, true), (2usize, false)] {
            let mut row = Row::new(0.0);
            row.entry(&cone, tail, 1.0);
            for k in 0..n {
                let (re, im) = (t_row[k].re, t_row[k].im);
                let (cr, ci) = if pick_re { (re, -im) } else { (im, re) };
                row.entry(&qp, 2 * k, -cr).entry(&qm, 2 * k, cr);
                row.entry(&qp, 2 * k + 1, -ci).entry(&qm, 2 * k + 1, ci);
            }
            pb.equality(row);
        }
        let mut noise = Row::new(sigma2.sqrt());
        noise.entry(&cone, 3, 1.0);
        pb.equality(noise);
    }

    // Power cone: || (G w, q) || <= sqrt(P_C).
    {
        let cone = pb.soc(1 + 2 * m + 2 * n);
        let mut head = Row::new(p.p_c.sqrt());
        head.entry(&cone, 0, 1.0);
        pb.equality(head);
        for r in 0..m {
            for (tail_off, pick_re) in [(1 + 2 * r, true), (2 + 2 * r, false)] {
                let mut row = Row::new(0.0);
                row.entry(&cone, tail_off, 1.0);
                for c in 0..2 {
                    let g = pair.g_mat[(r, c)];
                    let coef = if pick_re { g.re } else { g.im };
                    row.entry(&w, c, -coef);
                }
                pb.equality(row);
            }
        }
        for k in 0..2 * n {
            let mut row = Row::new(0.0);
            row.entry(&cone, 1 + 2 * m + k, 1.0)
                .entry(&qp, k, -1.0)
                .entry(&qm, k, 1.0);
            pb.equality(row);
        }
    }

    let prog = pb.build();
    let sol = solve(&prog, &opts.solver);
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::PrimalInfeasible => return Ok(None),
        other => {
            return Err(DesignError::NumericalFailure(format!(
                "XOR cancellation SOCP ended with {other:?}"
            )))
        }
    }
    let mut q_coef = CVec::zeros(n);
    for k in 0..n {
        let re = sol.x[qp.offset + 2 * k] - sol.x[qm.offset + 2 * k];
        let im = sol.x[qp.offset + 2 * k + 1] - sol.x[qm.offset + 2 * k + 1];
        q_coef[k] = C64::new(re, im);
    }
    let w_a = sol.x[w.offset].max(0.0);
    let w_b = sol.x[w.offset + 1].max(0.0);
    let phase = C64::from_polar(1.0, -pair.theta);
    let relay = real.g_a.conjugate() * C64::new(w_a, 0.0) + real.g_b.conjugate() * (phase * w_b);
    let su = &pair.u * q_coef;
    finish_design(
        Strategy::DfXor,
        Precoders::DfXor { relay, su },
        real,
        ind,
        [gamma, gamma],
        SolvePath::Socp,
        sol.iterations,
    )
    .map(Some)
}
