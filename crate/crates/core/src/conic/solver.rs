//! Homogeneous self-dual interior-point method with Nesterov-Todd scaling
//! and Mehrotra predictor-corrector steps.
//!
//! Internally the program is solved in minimization form (f = -c):
//!
//! ```text
//!   A x - b tau           = 0
//!   -A'y + f tau - z      = 0
//!   b'y - f'x - kappa     = 0
//!   x in K, z in K*, tau >= 0, kappa >= 0
//! ```
//!
//! A converged point with tau > 0 yields the optimum; kappa > 0 yields a
//! Farkas certificate of primal or dual infeasibility.

use crate::numkernel::{RMat, RVec};

use super::cones::{compute_scaling, ConeLayout, NtScaling};
use super::{ConeBlock, ConeProgram, ConeSolution, Residuals, SolveOptions, SolveStatus};

const STEP_FRACTION: f64 = 0.99;
const RUIZ_PASSES: usize = 4;

pub fn solve(program: &ConeProgram, options: &SolveOptions) -> ConeSolution {
    if let Err(e) = program.validate() {
        panic!("malformed cone program: {e}");
    }
    let (reduced, keep) = presolve_zero(program);
    let scaled = equilibrate(&reduced);
    let mut sol = solve_reduced(&scaled, options);
    unscale(&scaled, &mut sol);
    expand_zero(program, &keep, &mut sol);
    if sol.status == SolveStatus::Optimal || sol.status == SolveStatus::MaxIterations {
        sol.residuals = original_residuals(program, &sol);
        sol.objective = program.objective.dot(&sol.x);
    }
    sol
}

struct Reduced {
    blocks: Vec<ConeBlock>,
    c: RVec,
    a: RMat,
    b: RVec,
}

/// Drop columns that belong to Zero blocks; their variables are pinned.
fn presolve_zero(p: &ConeProgram) -> (Reduced, Vec<usize>) {
    let mut keep = Vec::new();
    let mut blocks = Vec::new();
    let mut col = 0usize;
    for blk in &p.blocks {
        match *blk {
            ConeBlock::Zero(k) => col += k,
            other => {
                let len = super::cones::block_dim(&other);
                for i in 0..len {
                    keep.push(col + i);
                }
                blocks.push(other);
                col += len;
            }
        }
    }
    let a = p.a.select_columns(keep.iter());
    let c = RVec::from_iterator(keep.len(), keep.iter().map(|&i| p.objective[i]));
    (
        Reduced {
            blocks,
            c,
            a,
            b: p.b.clone(),
        },
        keep,
    )
}

struct Scaled {
    prob: Reduced,
    row_scale: RVec,
    col_scale: RVec,
}

/// Ruiz-style equilibration with per-block column scaling so cone
/// membership is preserved.
fn equilibrate(r: &Reduced) -> Scaled {
    let (m, n) = (r.a.nrows(), r.a.ncols());
    let mut a = r.a.clone();
    let mut row_scale = RVec::from_element(m, 1.0);
    let mut col_scale = RVec::from_element(n, 1.0);

    let block_ranges: Vec<(usize, usize)> = {
        let mut v = Vec::new();
        let mut off = 0;
        for blk in &r.blocks {
            let len = super::cones::block_dim(blk);
            v.push((off, len));
            off += len;
        }
        v
    };

    for _ in 0..RUIZ_PASSES {
        for i in 0..m {
            let mx = a.row(i).iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            if mx > 0.0 {
                let s = 1.0 / mx.sqrt();
                for j in 0..n {
                    a[(i, j)] *= s;
                }
                row_scale[i] *= s;
            }
        }
        for &(off, len) in &block_ranges {
            let mut mx = 0.0f64;
            for j in off..off + len {
                for i in 0..m {
                    mx = mx.max(a[(i, j)].abs());
                }
            }
            if mx > 0.0 {
                let s = 1.0 / mx.sqrt();
                for j in off..off + len {
                    for i in 0..m {
                        a[(i, j)] *= s;
                    }
                    col_scale[j] *= s;
                }
            }
        }
    }

    let b = RVec::from_fn(m, |i, _| r.b[i] * row_scale[i]);
    let c = RVec::from_fn(n, |j, _| r.c[j] * col_scale[j]);
    Scaled {
        prob: Reduced {
            blocks: r.blocks.clone(),
            c,
            a,
            b,
        },
        row_scale,
        col_scale,
    }
}

fn unscale(s: &Scaled, sol: &mut ConeSolution) {
    let n = s.col_scale.len();
    let m = s.row_scale.len();
    for j in 0..n {
        sol.x[j] *= s.col_scale[j];
        sol.z[j] /= s.col_scale[j];
    }
    for i in 0..m {
        sol.y[i] *= s.row_scale[i];
    }
}

/// Reinsert zero-block coordinates; their dual slack is the free residual
/// of the dual equality.
fn expand_zero(p: &ConeProgram, keep: &[usize], sol: &mut ConeSolution) {
    let n = p.var_dim();
    if keep.len() == n {
        return;
    }
    let mut x = RVec::zeros(n);
    let mut z = RVec::zeros(n);
    for (r, &full) in keep.iter().enumerate() {
        x[full] = sol.x[r];
        z[full] = sol.z[r];
    }
    if sol.status == SolveStatus::Optimal {
        let aty = p.a.transpose() * &sol.y;
        let mut col = 0usize;
        for blk in &p.blocks {
            let len = super::cones::block_dim(blk);
            if let ConeBlock::Zero(_) = blk {
                for j in col..col + len {
                    z[j] = aty[j] - p.objective[j];
                }
            }
            col += len;
        }
    }
    sol.x = x;
    sol.z = z;
}

fn original_residuals(p: &ConeProgram, sol: &ConeSolution) -> Residuals {
    let pres = (&p.a * &sol.x - &p.b).norm() / (1.0 + p.b.norm());
    // Dual convention: A'y - z = c with z in K*.
    let dres =
        (p.a.transpose() * &sol.y - &sol.z - &p.objective).norm() / (1.0 + p.objective.norm());
    let pobj = p.objective.dot(&sol.x);
    let dobj = p.b.dot(&sol.y);
    Residuals {
        primal: pres,
        dual: dres,
        gap: (pobj - dobj).abs(),
    }
}

struct State {
    x: RVec,
    y: RVec,
    z: RVec,
    tau: f64,
    kappa: f64,
}

struct Direction {
    dx: RVec,
    dy: RVec,
    dz: RVec,
    dtau: f64,
    dkappa: f64,
}

fn solve_reduced(s: &Scaled, options: &SolveOptions) -> ConeSolution {
    let prob = &s.prob;
    let layout = ConeLayout::new(&prob.blocks);
    let (m, n) = (prob.a.nrows(), prob.a.ncols());
    let f = -&prob.c;
    let e = layout.identity();
    let degree = layout.degree + 1.0;

    let mut st = State {
        x: e.clone(),
        y: RVec::zeros(m),
        z: e.clone(),
        tau: 1.0,
        kappa: 1.0,
    };

    let fail = |iterations: usize| ConeSolution {
        status: SolveStatus::NumericalFailure,
        x: RVec::zeros(n),
        y: RVec::zeros(m),
        z: RVec::zeros(n),
        objective: 0.0,
        residuals: Residuals::default(),
        iterations,
    };

    let mut stalls = 0usize;
    for iter in 0..options.max_iter {
        let r_p = &prob.a * &st.x - &prob.b * st.tau;
        let r_d = -(prob.a.transpose() * &st.y) + &f * st.tau - &st.z;
        let r_g = prob.b.dot(&st.y) - f.dot(&st.x) - st.kappa;
        let mu = (st.x.dot(&st.z) + st.tau * st.kappa) / degree;

        if !mu.is_finite() {
            return fail(iter);
        }

        // Optimality.
        let xh = &st.x / st.tau;
        let yh = &st.y / st.tau;
        let zh = &st.z / st.tau;
        let pres = (&prob.a * &xh - &prob.b).norm() / (1.0 + prob.b.norm());
        let dres = (&f - prob.a.transpose() * &yh - &zh).norm() / (1.0 + f.norm());
        let pobj = f.dot(&xh);
        let dobj = prob.b.dot(&yh);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs().max(dobj.abs()));
        if pres <= options.tol && dres <= options.tol && gap <= options.tol {
            return ConeSolution {
                status: SolveStatus::Optimal,
                x: xh,
                y: -yh,
                z: zh,
                objective: -pobj,
                residuals: Residuals {
                    primal: pres,
                    dual: dres,
                    gap: (pobj - dobj).abs(),
                },
                iterations: iter,
            };
        }

        // Infeasibility certificates, only once the ray part dominates.
        if st.kappa > st.tau {
            let by = prob.b.dot(&st.y);
            if by > 0.0 {
                let zc = &st.z / by;
                let cert_res = (&f * st.tau - &r_d).norm() / by;
                if cert_res <= options.tol * (1.0 + zc.norm()) {
                    return ConeSolution {
                        status: SolveStatus::PrimalInfeasible,
                        x: RVec::zeros(n),
                        y: -(&st.y / by),
                        z: zc,
                        objective: 0.0,
                        residuals: Residuals {
                            primal: cert_res,
                            dual: 0.0,
                            gap: 0.0,
                        },
                        iterations: iter,
                    };
                }
            }
            let cx = prob.c.dot(&st.x);
            if cx > 0.0 {
                let xc = &st.x / cx;
                let ray_res = (&prob.a * &xc).norm();
                if ray_res <= options.tol * (1.0 + xc.norm()) {
                    return ConeSolution {
                        status: SolveStatus::DualInfeasible,
                        x: xc,
                        y: RVec::zeros(m),
                        z: RVec::zeros(n),
                        objective: 0.0,
                        residuals: Residuals {
                            primal: 0.0,
                            dual: ray_res,
                            gap: 0.0,
                        },
                        iterations: iter,
                    };
                }
            }
        }

        let Some(scaling) = compute_scaling(&layout, &st.x, &st.z) else {
            return fail(iter);
        };
        let lambda = &scaling.lambda;

        let Some(kkt) = KktFactors::new(prob, &layout, &scaling, &f) else {
            return fail(iter);
        };

        // Affine (predictor) direction.
        let lam_sq = layout.jordan_mul(lambda, lambda);
        let aff = kkt.newton(
            prob,
            &layout,
            &scaling,
            &st,
            &f,
            &(-&r_p),
            &(-&r_d),
            -r_g,
            &(-&lam_sq),
            -st.tau * st.kappa,
        );
        let alpha_aff = step_length(&layout, &scaling, &st, &aff).min(1.0);

        // Centering weight from the predictor outcome.
        let mu_aff = {
            let xn = &st.x + &aff.dx * alpha_aff;
            let zn = &st.z + &aff.dz * alpha_aff;
            let tn = st.tau + alpha_aff * aff.dtau;
            let kn = st.kappa + alpha_aff * aff.dkappa;
            (xn.dot(&zn) + tn * kn) / degree
        };
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // Combined (corrector) direction.
        let eta = layout.jordan_mul(
            &scaling.wtinv(&layout, &aff.dx),
            &scaling.w(&layout, &aff.dz),
        );
        let ds_target = &e * (sigma * mu) - &lam_sq - &eta;
        let dk_target = sigma * mu - st.tau * st.kappa - aff.dtau * aff.dkappa;
        let lin = 1.0 - sigma;
        let dir = kkt.newton(
            prob,
            &layout,
            &scaling,
            &st,
            &f,
            &(-&r_p * lin),
            &(-&r_d * lin),
            -r_g * lin,
            &ds_target,
            dk_target,
        );

        let alpha = (STEP_FRACTION * step_length(&layout, &scaling, &st, &dir)).min(1.0);
        if alpha < 1e-9 {
            stalls += 1;
            if stalls >= 2 {
                return fail(iter);
            }
        } else {
            stalls = 0;
        }

        st.x += &dir.dx * alpha;
        st.y += &dir.dy * alpha;
        st.z += &dir.dz * alpha;
        st.tau += alpha * dir.dtau;
        st.kappa += alpha * dir.dkappa;

        if !(st.tau > 0.0 && st.kappa > 0.0) {
            return fail(iter);
        }
    }

    // Out of iterations: report the scaled point anyway.
    let xh = &st.x / st.tau;
    let yh = &st.y / st.tau;
    let zh = &st.z / st.tau;
    ConeSolution {
        status: SolveStatus::MaxIterations,
        x: xh.clone(),
        y: -yh,
        z: zh,
        objective: prob.c.dot(&xh),
        residuals: Residuals::default(),
        iterations: options.max_iter,
    }
}

/// Factorized normal equations S = A H^{-1} A' plus the constant
/// elimination pair (x1, y1) for the tau column.
struct KktFactors {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    hinv_at: Vec<RVec>,
    x1: RVec,
    y1: RVec,
    denom_const: f64,
}

impl KktFactors {
    fn new(prob: &Reduced, layout: &ConeLayout, sc: &NtScaling, f: &RVec) -> Option<KktFactors> {
        let m = prob.a.nrows();
        let mut hinv_at = Vec::with_capacity(m);
        for i in 0..m {
            let ai = prob.a.row(i).transpose();
            hinv_at.push(sc.hinv(layout, &ai));
        }
        let mut s_mat = RMat::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let v = prob.a.row(j).transpose().dot(&hinv_at[i]);
                s_mat[(i, j)] = v;
                s_mat[(j, i)] = v;
            }
        }
        let chol = cholesky_with_ridge(&s_mat)?;
        let factors = KktFactors {
            chol,
            hinv_at,
            x1: RVec::zeros(0),
            y1: RVec::zeros(0),
            denom_const: 0.0,
        };
        let (x1, y1) = factors.k2(prob, layout, sc, &(-f), &prob.b);
        let denom_const = -f.dot(&x1) + prob.b.dot(&y1);
        Some(KktFactors {
            x1,
            y1,
            denom_const,
            ..factors
        })
    }

    /// Solve H u - A'v = p, A u = q.
    fn k2(
        &self,
        prob: &Reduced,
        layout: &ConeLayout,
        sc: &NtScaling,
        p: &RVec,
        q: &RVec,
    ) -> (RVec, RVec) {
        let hp = sc.hinv(layout, p);
        let rhs = q - &prob.a * &hp;
        let v = self.chol.solve(&rhs);
        let mut u = hp;
        for (i, col) in self.hinv_at.iter().enumerate() {
            u += col * v[i];
        }
        (u, v)
    }

    #[allow(clippy::too_many_arguments)]
    fn newton(
        &self,
        prob: &Reduced,
        layout: &ConeLayout,
        sc: &NtScaling,
        st: &State,
        f: &RVec,
        dp: &RVec,
        dd: &RVec,
        dg: f64,
        ds_target: &RVec,
        dk_target: f64,
    ) -> Direction {
        let ds = layout.jordan_linv(&sc.lambda, ds_target);
        let dd_hat = dd + sc.winv(layout, &ds);
        let dg_hat = dg + dk_target / st.tau;
        let (x2, y2) = self.k2(prob, layout, sc, &dd_hat, dp);
        let denom = self.denom_const + st.kappa / st.tau;
        let dtau = (dg_hat + f.dot(&x2) - prob.b.dot(&y2)) / denom;
        let dx = &x2 + &self.x1 * dtau;
        let dy = &y2 + &self.y1 * dtau;
        let dz = -dd - prob.a.transpose() * &dy + f * dtau;
        let dkappa = (dk_target - st.kappa * dtau) / st.tau;
        Direction {
            dx,
            dy,
            dz,
            dtau,
            dkappa,
        }
    }
}

fn cholesky_with_ridge(s: &RMat) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = s.clone().cholesky() {
        return Some(c);
    }
    let max_diag = (0..s.nrows()).fold(0.0f64, |acc, i| acc.max(s[(i, i)].abs()));
    let mut ridge = 1e-14 * (1.0 + max_diag);
    for _ in 0..4 {
        let reg = s + RMat::identity(s.nrows(), s.nrows()).scale(ridge);
        if let Some(c) = reg.cholesky() {
            return Some(c);
        }
        ridge *= 1e3;
    }
    None
}

fn step_length(layout: &ConeLayout, sc: &NtScaling, st: &State, d: &Direction) -> f64 {
    let dx_s = sc.wtinv(layout, &d.dx);
    let dz_s = sc.w(layout, &d.dz);
    let mut alpha = layout
        .step_to_boundary(&sc.lambda, &dx_s)
        .min(layout.step_to_boundary(&sc.lambda, &dz_s));
    if d.dtau < 0.0 {
        alpha = alpha.min(-st.tau / d.dtau);
    }
    if d.dkappa < 0.0 {
        alpha = alpha.min(-st.kappa / d.dkappa);
    }
    alpha
}
