//! Linear-fractional semidefinite programs over complex Hermitian blocks,
//! solved through the Charnes-Cooper change of variables, with a bisection
//! search kept as an independent cross-check, plus the deterministic
//! rank-one reduction applied to optimal solutions.
//!
//! The fractional program has the shape
//!
//! ```text
//!   maximize    num(X) / (den(X) + d0)
//!   subject to  constraint_j(X) >= rhs_j
//!               budget(X) <= limit
//!               X_b >= 0 (Hermitian) for every block b
//! ```
//!
//! where every functional is a sum of real trace forms Tr(C_b X_b). The
//! Charnes-Cooper substitution Xbar = z X, z = 1/(den(X) + d0) turns this
//! into one linear SDP over (Xbar, z).

use thiserror::Error;

use crate::conic::{
    extract_hermitian, herm_coeffs, smat, solve, ProgramBuilder, Row, SolveOptions, SolveStatus,
    VarRef,
};
use crate::numkernel::{
    hermitian_eig, hermitian_part, max_abs, CMat, KernelError, RMat, C64, RANK_TOL,
};

/// Guard below which the Charnes-Cooper normalization variable is treated
/// as degenerate rather than divided by.
pub const Z_MIN: f64 = 1e-10;

/// A sum of Hermitian trace functionals, one optional coefficient per
/// block; `None` contributes nothing.
pub type BlockCoeffs = Vec<Option<CMat>>;

#[derive(Debug, Clone)]
pub struct FracConstraint {
    pub coeffs: BlockCoeffs,
    /// Constraint reads sum_b Tr(C_b X_b) >= rhs.
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct FractionalSdpSpec {
    /// Complex Hermitian block dimensions.
    pub block_dims: Vec<usize>,
    pub numerator: BlockCoeffs,
    pub denominator: BlockCoeffs,
    /// Additive constant of the denominator; must be positive.
    pub denominator_const: f64,
    pub constraints: Vec<FracConstraint>,
    /// Budget reads sum_b Tr(B_b X_b) <= limit.
    pub budget: BlockCoeffs,
    pub budget_limit: f64,
}

#[derive(Debug, Error)]
pub enum FracError {
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("malformed spec: {0}")]
    MalformedSpec(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Solution of the transformed program together with the recovered blocks.
#[derive(Debug, Clone)]
pub struct CharnesCooperSolution {
    /// Scaled blocks Xbar = z X.
    pub scaled_blocks: Vec<CMat>,
    pub z: f64,
    /// Recovered blocks X = Xbar / z.
    pub blocks: Vec<CMat>,
    /// Optimal value of the fractional objective.
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug)]
pub enum FracOutcome {
    Solved(CharnesCooperSolution),
    Infeasible,
}

impl FractionalSdpSpec {
    fn validate(&self) -> Result<(), FracError> {
        if !(self.denominator_const > 0.0) {
            return Err(FracError::MalformedSpec(format!(
                "denominator constant must be positive, got {}",
                self.denominator_const
            )));
        }
        let l = self.block_dims.len();
        let check = |c: &BlockCoeffs, what: &str| -> Result<(), FracError> {
            if c.len() != l {
                return Err(FracError::MalformedSpec(format!(
                    "{what} has {} blocks, spec has {l}",
                    c.len()
                )));
            }
            for (b, m) in c.iter().enumerate() {
                if let Some(m) = m {
                    if m.nrows() != self.block_dims[b] || m.ncols() != self.block_dims[b] {
                        return Err(FracError::MalformedSpec(format!(
                            "{what} block {b} is {}x{}, expected {}",
                            m.nrows(),
                            m.ncols(),
                            self.block_dims[b]
                        )));
                    }
                }
            }
            Ok(())
        };
        check(&self.numerator, "numerator")?;
        check(&self.denominator, "denominator")?;
        check(&self.budget, "budget")?;
        for (j, c) in self.constraints.iter().enumerate() {
            check(&c.coeffs, &format!("constraint {j}"))?;
        }
        Ok(())
    }

    /// Evaluate one functional at a set of blocks (real part of the trace).
    pub fn eval(coeffs: &BlockCoeffs, blocks: &[CMat]) -> f64 {
        coeffs
            .iter()
            .zip(blocks)
            .map(|(c, x)| match c {
                Some(c) => (c * x).trace().re,
                None => 0.0,
            })
            .sum()
    }
}

struct CcProgram {
    vars: Vec<VarRef>,
    z_var: VarRef,
    prog: crate::conic::ConeProgram,
}

fn build_cc_program(spec: &FractionalSdpSpec) -> CcProgram {
    let mut pb = ProgramBuilder::new();
    let vars: Vec<VarRef> = spec
        .block_dims
        .iter()
        .map(|&n| pb.psd_hermitian(n))
        .collect();
    let z_var = pb.nonneg(1);

    let add_coeffs = |row: &mut Row, coeffs: &BlockCoeffs, sign: f64| {
        for (b, c) in coeffs.iter().enumerate() {
            if let Some(c) = c {
                row.block(&vars[b], &(herm_coeffs(c) * sign));
            }
        }
    };

    // Objective: maximize num(Xbar).
    for (b, c) in spec.numerator.iter().enumerate() {
        if let Some(c) = c {
            pb.objective_block(&vars[b], &herm_coeffs(c));
        }
    }

    // Normalization row: den(Xbar) + z * d0 = 1.
    let mut norm = Row::new(1.0);
    add_coeffs(&mut norm, &spec.denominator, 1.0);
    norm.entry(&z_var, 0, spec.denominator_const);
    pb.equality(norm);

    // Constraint rows: f_j(Xbar) - rhs_j z - s_j = 0.
    for c in &spec.constraints {
        let s = pb.nonneg(1);
        let mut row = Row::new(0.0);
        add_coeffs(&mut row, &c.coeffs, 1.0);
        row.entry(&z_var, 0, -c.rhs);
        row.entry(&s, 0, -1.0);
        pb.equality(row);
    }

    // Budget row: limit z - budget(Xbar) - s = 0.
    {
        let s = pb.nonneg(1);
        let mut row = Row::new(0.0);
        add_coeffs(&mut row, &spec.budget, -1.0);
        row.entry(&z_var, 0, spec.budget_limit);
        row.entry(&s, 0, -1.0);
        pb.equality(row);
    }

    let prog = pb.build();
    CcProgram { vars, z_var, prog }
}

fn extract_block(x: &nalgebra::DVector<f64>, var: &VarRef, n: usize) -> CMat {
    let sv = x.rows(var.offset, var.len).into_owned();
    let emb = smat(sv.as_slice(), 2 * n);
    extract_hermitian(&emb).expect("embedded block has even dimension")
}

/// Solve the fractional program via the Charnes-Cooper transformation.
pub fn solve_fractional(
    spec: &FractionalSdpSpec,
    options: &SolveOptions,
) -> Result<FracOutcome, FracError> {
    spec.validate()?;
    let cc = build_cc_program(spec);
    let sol = solve(&cc.prog, options);
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::PrimalInfeasible => return Ok(FracOutcome::Infeasible),
        other => {
            return Err(FracError::NumericalFailure(format!(
                "transformed program ended with {other:?}"
            )))
        }
    }
    let z = sol.x[cc.z_var.offset];
    if z <= Z_MIN {
        return Err(FracError::NumericalFailure(format!(
            "normalization variable z={z:.3e} is degenerate"
        )));
    }
    let scaled_blocks: Vec<CMat> = spec
        .block_dims
        .iter()
        .enumerate()
        .map(|(b, &n)| clean_psd(&extract_block(&sol.x, &cc.vars[b], n)))
        .collect();
    let blocks: Vec<CMat> = scaled_blocks.iter().map(|m| m.scale(1.0 / z)).collect();
    let objective = FractionalSdpSpec::eval(&spec.numerator, &blocks)
        / (FractionalSdpSpec::eval(&spec.denominator, &blocks) + spec.denominator_const);
    Ok(FracOutcome::Solved(CharnesCooperSolution {
        scaled_blocks,
        z,
        blocks,
        objective,
        iterations: sol.iterations,
    }))
}

/// Clip tiny negative eigenvalues introduced by the solver tolerance.
fn clean_psd(m: &CMat) -> CMat {
    hermitian_part(m)
}

/// Bisection on the achievable ratio, used only as a test oracle against
/// [`solve_fractional`]. Each probe maximizes num(X) - t (den(X) + d0)
/// subject to the same constraint set; the optimum is the largest t at
/// which that value is still nonnegative.
pub fn bisection_oracle(
    spec: &FractionalSdpSpec,
    tol_ratio: f64,
    options: &SolveOptions,
) -> Result<FracOutcome, FracError> {
    spec.validate()?;
    let probe = |t: f64| -> Result<Option<f64>, FracError> {
        let mut pb = ProgramBuilder::new();
        let vars: Vec<VarRef> = spec
            .block_dims
            .iter()
            .map(|&n| pb.psd_hermitian(n))
            .collect();
        for (b, c) in spec.numerator.iter().enumerate() {
            if let Some(c) = c {
                pb.objective_block(&vars[b], &herm_coeffs(c));
            }
        }
        for (b, c) in spec.denominator.iter().enumerate() {
            if let Some(c) = c {
                pb.objective_block(&vars[b], &(herm_coeffs(c) * (-t)));
            }
        }
        for c in &spec.constraints {
            let s = pb.nonneg(1);
            let mut row = Row::new(c.rhs);
            for (b, m) in c.coeffs.iter().enumerate() {
                if let Some(m) = m {
                    row.block(&vars[b], &herm_coeffs(m));
                }
            }
            row.entry(&s, 0, -1.0);
            pb.equality(row);
        }
        {
            let s = pb.nonneg(1);
            let mut row = Row::new(spec.budget_limit);
            for (b, m) in spec.budget.iter().enumerate() {
                if let Some(m) = m {
                    row.block(&vars[b], &herm_coeffs(m));
                }
            }
            row.entry(&s, 0, 1.0);
            pb.equality(row);
        }
        let sol = solve(&pb.build(), options);
        match sol.status {
            SolveStatus::Optimal => Ok(Some(sol.objective - t * spec.denominator_const)),
            SolveStatus::PrimalInfeasible => Ok(None),
            other => Err(FracError::NumericalFailure(format!(
                "bisection probe ended with {other:?}"
            ))),
        }
    };

    // First probe doubles as the feasibility check.
    let f0 = match probe(0.0)? {
        Some(v) => v,
        None => return Ok(FracOutcome::Infeasible),
    };
    // num(X) <= f0 on the feasible set, den >= 0, so the ratio is bounded
    // by f0 / d0.
    let mut lo = 0.0f64;
    let mut hi = f0.max(0.0) / spec.denominator_const + 1.0;
    while hi - lo > tol_ratio * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        let val = probe(mid)?.ok_or_else(|| {
            FracError::NumericalFailure("probe became infeasible during bisection".into())
        })?;
        if val >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let value = 0.5 * (lo + hi);
    Ok(FracOutcome::Solved(CharnesCooperSolution {
        scaled_blocks: Vec::new(),
        z: f64::NAN,
        blocks: Vec::new(),
        objective: value,
        iterations: 0,
    }))
}

/// One linear functional to be preserved exactly by the rank reduction:
/// one optional Hermitian coefficient per block.
pub type PreservedFunctional = BlockCoeffs;

/// Reduce optimal PSD blocks to rank one while preserving every given
/// constraint functional, by repeatedly stepping along a Hermitian
/// nullspace direction of the constraint system restricted to the ranges
/// of the current blocks.
///
/// Blocks that already have rank <= 1 keep a zero perturbation; if the
/// restricted system only has the zero solution the rank-one blocks are
/// re-admitted as unknowns before giving up.
pub fn rank_reduce(
    blocks: &[CMat],
    functionals: &[PreservedFunctional],
    tol: f64,
) -> Result<Vec<CMat>, FracError> {
    // Project each block onto its numerical range first, so the solver's
    // spurious tail eigenvalues are discarded once instead of bleeding
    // into the preservation checks at every iteration.
    let mut current: Vec<CMat> = Vec::with_capacity(blocks.len());
    let mut budget = 0usize;
    for b in blocks {
        let eig = hermitian_eig(b, tol)?;
        budget += eig.rank;
        let mut t = CMat::zeros(b.nrows(), b.ncols());
        for k in 0..eig.rank {
            let col = eig.vectors.column(k);
            t += (col * col.adjoint()).scale(eig.values[k]);
        }
        current.push(hermitian_part(&t));
    }
    let initial_values: Vec<f64> = functionals
        .iter()
        .map(|f| FractionalSdpSpec::eval(f, &current))
        .collect();

    for _ in 0..budget.max(1) {
        // Factor each block as V V^H over its numerical range.
        let mut factors: Vec<Option<CMat>> = Vec::with_capacity(current.len());
        let mut ranks: Vec<usize> = Vec::with_capacity(current.len());
        for b in &current {
            let eig = hermitian_eig(b, tol)?;
            let r = eig.rank;
            ranks.push(r);
            if r == 0 {
                factors.push(None);
                continue;
            }
            let mut v = CMat::zeros(b.nrows(), r);
            for k in 0..r {
                let col = eig.vectors.column(k) * C64::new(eig.values[k].sqrt(), 0.0);
                v.set_column(k, &col);
            }
            factors.push(Some(v));
        }
        if ranks.iter().all(|&r| r <= 1) {
            break;
        }

        // Try the restricted system first (rank-one blocks frozen), then
        // fall back to all blocks if it only has the zero solution.
        let candidates = [
            ranks.iter().map(|&r| r >= 2).collect::<Vec<bool>>(),
            ranks.iter().map(|&r| r >= 1).collect::<Vec<bool>>(),
        ];
        let mut step: Option<Vec<Option<CMat>>> = None;
        for active in &candidates {
            if let Some(ms) = nullspace_direction(&factors, &ranks, active, functionals) {
                step = Some(ms);
                break;
            }
        }
        let Some(ms) = step else {
            let unknowns: usize = ranks.iter().map(|&r| r * r).sum();
            return Err(FracError::NumericalFailure(format!(
                "no nonzero Hermitian nullspace direction with sum(rank^2)={unknowns} \
                 over {} preserved functionals",
                functionals.len()
            )));
        };

        // Common scalar: eigenvalue of largest magnitude over every block,
        // positive sign preferred on ties, so coupled functionals stay
        // exactly preserved.
        let mut delta: Option<f64> = None;
        for m in ms.iter().flatten() {
            let eig = hermitian_eig(m, RANK_TOL)?;
            for &lam in eig.values.iter() {
                let better = match delta {
                    None => true,
                    Some(d) => {
                        lam.abs() > d.abs() || (lam.abs() == d.abs() && lam > 0.0 && d < 0.0)
                    }
                };
                if better {
                    delta = Some(lam);
                }
            }
        }
        let delta = delta.filter(|d| d.abs() > 0.0).ok_or_else(|| {
            FracError::NumericalFailure("nullspace direction has zero spectrum".into())
        })?;

        for (b, m) in ms.iter().enumerate() {
            let (Some(v), Some(m)) = (&factors[b], m) else {
                continue;
            };
            let r = m.nrows();
            let inner = CMat::identity(r, r) - m.scale(1.0 / delta);
            current[b] = hermitian_part(&(v * inner * v.adjoint()));
        }
    }

    // Final verification: ranks reduced and functionals preserved.
    for b in &current {
        let eig = hermitian_eig(b, tol)?;
        if eig.rank > 1 {
            return Err(FracError::NumericalFailure(format!(
                "rank reduction stopped at rank {}",
                eig.rank
            )));
        }
    }
    for (f, &v0) in functionals.iter().zip(&initial_values) {
        let v = FractionalSdpSpec::eval(f, &current);
        if (v - v0).abs() > 1e-7 * (1.0 + v0.abs()) {
            return Err(FracError::NumericalFailure(format!(
                "functional drifted from {v0:.12e} to {v:.12e} during rank reduction"
            )));
        }
    }
    Ok(current)
}

/// Hermitian nullspace direction (M_b per active block) of the preserved
/// functionals restricted to the block ranges. Parameterization per block:
/// r real diagonal entries, then (re, im) pairs of the strict upper
/// triangle, column by column.
fn nullspace_direction(
    factors: &[Option<CMat>],
    ranks: &[usize],
    active: &[bool],
    functionals: &[PreservedFunctional],
) -> Option<Vec<Option<CMat>>> {
    let mut offsets = Vec::with_capacity(ranks.len());
    let mut total = 0usize;
    for (b, &r) in ranks.iter().enumerate() {
        offsets.push(total);
        if active[b] && r >= 1 {
            total += r * r;
        }
    }
    if total == 0 {
        return None;
    }
    let mut a = RMat::zeros(functionals.len(), total);
    for (row, f) in functionals.iter().enumerate() {
        for (b, coeff) in f.iter().enumerate() {
            let (Some(c), Some(v)) = (coeff, &factors[b]) else {
                continue;
            };
            if !active[b] {
                continue;
            }
            let g = hermitian_part(&(v.adjoint() * c * v));
            let r = ranks[b];
            let base = offsets[b];
            let mut idx = base;
            for i in 0..r {
                a[(row, idx)] += g[(i, i)].re;
                idx += 1;
            }
            for j in 1..r {
                for i in 0..j {
                    a[(row, idx)] += 2.0 * g[(i, j)].re;
                    a[(row, idx + 1)] += 2.0 * g[(i, j)].im;
                    idx += 2;
                }
            }
        }
    }
    let ns = crate::numkernel::nullspace_real(&a, RANK_TOL);
    if ns.ncols() == 0 {
        return None;
    }
    let dir = ns.column(0);
    // Unflatten into Hermitian blocks.
    let mut ms: Vec<Option<CMat>> = Vec::with_capacity(ranks.len());
    for (b, &r) in ranks.iter().enumerate() {
        if !active[b] || r == 0 {
            ms.push(None);
            continue;
        }
        let base = offsets[b];
        let mut m = CMat::zeros(r, r);
        let mut idx = base;
        for i in 0..r {
            m[(i, i)] = C64::new(dir[idx], 0.0);
            idx += 1;
        }
        for j in 1..r {
            for i in 0..j {
                let val = C64::new(dir[idx], dir[idx + 1]);
                m[(i, j)] = val;
                m[(j, i)] = val.conj();
                idx += 2;
            }
        }
        if max_abs(&m) == 0.0 {
            ms.push(None);
        } else {
            ms.push(Some(m));
        }
    }
    if ms.iter().all(|m| m.is_none()) {
        None
    } else {
        Some(ms)
    }
}
