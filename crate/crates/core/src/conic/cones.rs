//! Cone bookkeeping for the interior-point solver: block layout, scaled
//! symmetric vectorization, Jordan-algebra operations and Nesterov-Todd
//! scalings for the nonnegative, second-order and PSD cones.

use nalgebra::DMatrix;

use crate::numkernel::{RMat, RVec};

use super::ConeBlock;

pub const SQRT2: f64 = std::f64::consts::SQRT_2;

/// svec length of a k x k symmetric matrix.
pub fn svec_dim(k: usize) -> usize {
    k * (k + 1) / 2
}

/// Scaled vectorization of the upper triangle (column-major), off-diagonals
/// multiplied by sqrt(2) so that <A,B>_F = svec(A) . svec(B).
pub fn svec(m: &RMat) -> RVec {
    let k = m.nrows();
    let mut out = RVec::zeros(svec_dim(k));
    let mut idx = 0;
    for j in 0..k {
        for i in 0..=j {
            out[idx] = if i == j { m[(i, j)] } else { SQRT2 * m[(i, j)] };
            idx += 1;
        }
    }
    out
}

/// Inverse of [`svec`].
pub fn smat(v: &[f64], k: usize) -> RMat {
    assert_eq!(v.len(), svec_dim(k));
    let mut m = RMat::zeros(k, k);
    let mut idx = 0;
    for j in 0..k {
        for i in 0..=j {
            let val = if i == j { v[idx] } else { v[idx] / SQRT2 };
            m[(i, j)] = val;
            m[(j, i)] = val;
            idx += 1;
        }
    }
    m
}

/// Variable dimension contributed by a block.
pub fn block_dim(b: &ConeBlock) -> usize {
    match *b {
        ConeBlock::Zero(k) | ConeBlock::NonNeg(k) | ConeBlock::Soc(k) => k,
        ConeBlock::Psd(k) => svec_dim(k),
    }
}

/// Layout of the conic variable vector over proper cone blocks. Zero blocks
/// must be presolved away before building a layout.
pub struct ConeLayout {
    pub blocks: Vec<ConeBlock>,
    pub offsets: Vec<usize>,
    pub dim: usize,
    /// Barrier degree: k per nonnegative block, 2 per second-order cone,
    /// k per k x k PSD block.
    pub degree: f64,
}

impl ConeLayout {
    pub fn new(blocks: &[ConeBlock]) -> ConeLayout {
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut dim = 0;
        let mut degree = 0.0;
        for b in blocks {
            offsets.push(dim);
            dim += block_dim(b);
            degree += match *b {
                ConeBlock::Zero(_) => panic!("zero blocks must be presolved away"),
                ConeBlock::NonNeg(k) => k as f64,
                ConeBlock::Soc(_) => 2.0,
                ConeBlock::Psd(k) => k as f64,
            };
        }
        ConeLayout {
            blocks: blocks.to_vec(),
            offsets,
            dim,
            degree,
        }
    }

    /// Jordan identity element of the product cone.
    pub fn identity(&self) -> RVec {
        let mut e = RVec::zeros(self.dim);
        for (b, &off) in self.blocks.iter().zip(&self.offsets) {
            match *b {
                ConeBlock::NonNeg(k) => {
                    for i in 0..k {
                        e[off + i] = 1.0;
                    }
                }
                ConeBlock::Soc(_) => e[off] = 1.0,
                ConeBlock::Psd(k) => {
                    let mut idx = 0;
                    for j in 0..k {
                        for i in 0..=j {
                            if i == j {
                                e[off + idx] = 1.0;
                            }
                            idx += 1;
                        }
                    }
                }
                ConeBlock::Zero(_) => unreachable!(),
            }
        }
        e
    }

    /// Jordan product a o b, blockwise.
    pub fn jordan_mul(&self, a: &RVec, b: &RVec) -> RVec {
        let mut out = RVec::zeros(self.dim);
        for (blk, &off) in self.blocks.iter().zip(&self.offsets) {
            match *blk {
                ConeBlock::NonNeg(k) => {
                    for i in 0..k {
                        out[off + i] = a[off + i] * b[off + i];
                    }
                }
                ConeBlock::Soc(k) => {
                    let (a0, b0) = (a[off], b[off]);
                    let mut dot = a0 * b0;
                    for i in 1..k {
                        dot += a[off + i] * b[off + i];
                    }
                    out[off] = dot;
                    for i in 1..k {
                        out[off + i] = a0 * b[off + i] + b0 * a[off + i];
                    }
                }
                ConeBlock::Psd(k) => {
                    let am = smat(&a.as_slice()[off..off + svec_dim(k)], k);
                    let bm = smat(&b.as_slice()[off..off + svec_dim(k)], k);
                    let prod = (&am * &bm + &bm * &am).scale(0.5);
                    let sv = svec(&prod);
                    out.rows_mut(off, sv.len()).copy_from(&sv);
                }
                ConeBlock::Zero(_) => unreachable!(),
            }
        }
        out
    }

    /// Solve lam o w = b for w. `lam` must be a scaled point (diagonal in
    /// the PSD Jordan frame), which is the only way the solver uses it.
    pub fn jordan_linv(&self, lam: &RVec, b: &RVec) -> RVec {
        let mut out = RVec::zeros(self.dim);
        for (blk, &off) in self.blocks.iter().zip(&self.offsets) {
            match *blk {
                ConeBlock::NonNeg(k) => {
                    for i in 0..k {
                        out[off + i] = b[off + i] / lam[off + i];
                    }
                }
                ConeBlock::Soc(k) => {
                    let l0 = lam[off];
                    let mut lbar_dot_b = 0.0;
                    let mut lbar_sq = 0.0;
                    for i in 1..k {
                        lbar_dot_b += lam[off + i] * b[off + i];
                        lbar_sq += lam[off + i] * lam[off + i];
                    }
                    let det = l0 * l0 - lbar_sq;
                    let w0 = (l0 * b[off] - lbar_dot_b) / det;
                    out[off] = w0;
                    for i in 1..k {
                        out[off + i] = (b[off + i] - w0 * lam[off + i]) / l0;
                    }
                }
                ConeBlock::Psd(k) => {
                    // Diagonal lambda: elementwise 2 b_ij / (l_i + l_j).
                    let d = diag_of_svec(&lam.as_slice()[off..off + svec_dim(k)], k);
                    let bm = smat(&b.as_slice()[off..off + svec_dim(k)], k);
                    let sol = RMat::from_fn(k, k, |i, j| 2.0 * bm[(i, j)] / (d[i] + d[j]));
                    let sv = svec(&sol);
                    out.rows_mut(off, sv.len()).copy_from(&sv);
                }
                ConeBlock::Zero(_) => unreachable!(),
            }
        }
        out
    }

    /// Largest step t such that lam + s*d stays in the cone for all
    /// s in [0, t]; `lam` must be a scaled point.
    pub fn step_to_boundary(&self, lam: &RVec, d: &RVec) -> f64 {
        let mut alpha = f64::INFINITY;
        for (blk, &off) in self.blocks.iter().zip(&self.offsets) {
            let a = match *blk {
                ConeBlock::NonNeg(k) => {
                    let mut t = f64::INFINITY;
                    for i in 0..k {
                        if d[off + i] < 0.0 {
                            t = t.min(-lam[off + i] / d[off + i]);
                        }
                    }
                    t
                }
                ConeBlock::Soc(k) => {
                    soc_step(&lam.as_slice()[off..off + k], &d.as_slice()[off..off + k])
                }
                ConeBlock::Psd(k) => {
                    let lamd = diag_of_svec(&lam.as_slice()[off..off + svec_dim(k)], k);
                    let dm = smat(&d.as_slice()[off..off + svec_dim(k)], k);
                    let scaled =
                        RMat::from_fn(k, k, |i, j| dm[(i, j)] / (lamd[i] * lamd[j]).sqrt());
                    let eig = scaled.symmetric_eigen();
                    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
                    if min < 0.0 {
                        -1.0 / min
                    } else {
                        f64::INFINITY
                    }
                }
                ConeBlock::Zero(_) => unreachable!(),
            };
            alpha = alpha.min(a);
        }
        alpha
    }

    /// Strict interior test, used to validate iterates.
    pub fn is_interior(&self, v: &RVec) -> bool {
        for (blk, &off) in self.blocks.iter().zip(&self.offsets) {
            match *blk {
                ConeBlock::NonNeg(k) => {
                    for i in 0..k {
                        if !(v[off + i] > 0.0) {
                            return false;
                        }
                    }
                }
                ConeBlock::Soc(k) => {
                    let mut sq = 0.0;
                    for i in 1..k {
                        sq += v[off + i] * v[off + i];
                    }
                    if !(v[off] > 0.0 && v[off] * v[off] - sq > 0.0) {
                        return false;
                    }
                }
                ConeBlock::Psd(k) => {
                    let m = smat(&v.as_slice()[off..off + svec_dim(k)], k);
                    if m.cholesky().is_none() {
                        return false;
                    }
                }
                ConeBlock::Zero(_) => unreachable!(),
            }
        }
        true
    }

    /// Worst blockwise cone violation of `v`; test-only validation helper.
    #[cfg(test)]
    pub fn infeasibility(&self, v: &RVec) -> f64 {
        let mut worst: f64 = 0.0;
        for (blk, &off) in self.blocks.iter().zip(&self.offsets) {
            match *blk {
                ConeBlock::NonNeg(k) => {
                    for i in 0..k {
                        worst = worst.max(-v[off + i]);
                    }
                }
                ConeBlock::Soc(k) => {
                    let mut sq = 0.0;
                    for i in 1..k {
                        sq += v[off + i] * v[off + i];
                    }
                    worst = worst.max(sq.sqrt() - v[off]);
                }
                ConeBlock::Psd(k) => {
                    let m = smat(&v.as_slice()[off..off + svec_dim(k)], k);
                    let eig = m.symmetric_eigen();
                    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
                    worst = worst.max(-min);
                }
                ConeBlock::Zero(_) => unreachable!(),
            }
        }
        worst.max(0.0)
    }
}

fn diag_of_svec(v: &[f64], k: usize) -> Vec<f64> {
    let mut d = Vec::with_capacity(k);
    let mut idx = 0;
    for j in 0..k {
        for i in 0..=j {
            if i == j {
                d.push(v[idx]);
            }
            idx += 1;
        }
    }
    d
}

/// First positive root of jdot(lam + a d) as a function of a, or infinity.
fn soc_step(lam: &[f64], d: &[f64]) -> f64 {
    let k = lam.len();
    let jdot = |u: &[f64]| {
        let mut sq = 0.0;
        for i in 1..k {
            sq += u[i] * u[i];
        }
        u[0] * u[0] - sq
    };
    let a0 = jdot(lam);
    let a2 = jdot(d);
    let mut cross = lam[0] * d[0];
    for i in 1..k {
        cross -= lam[i] * d[i];
    }
    let a1 = 2.0 * cross;
    // f(a) = a2 a^2 + a1 a + a0, f(0) = a0 > 0 in the interior.
    if a2.abs() < 1e-300 {
        if a1 < 0.0 {
            return -a0 / a1;
        }
        return f64::INFINITY;
    }
    let disc = a1 * a1 - 4.0 * a2 * a0;
    if a2 > 0.0 {
        if disc <= 0.0 {
            return f64::INFINITY;
        }
        let sqd = disc.sqrt();
        // Stable root pair for an upward parabola with f(0) > 0.
        let q = -0.5 * (a1 + a1.signum() * sqd);
        let r1 = q / a2;
        let r2 = a0 / q;
        let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
        if lo > 0.0 {
            lo
        } else if hi > 0.0 {
            // f(0) > 0 with one negative root means 0 is between the roots,
            // which contradicts f(0) > 0 for an upward parabola; guard anyway.
            hi
        } else {
            f64::INFINITY
        }
    } else {
        // Downward parabola: exactly one positive root.
        let sqd = disc.max(0.0).sqrt();
        let q = -0.5 * (a1 + a1.signum() * sqd);
        let r1 = q / a2;
        let r2 = a0 / q;
        r1.max(r2)
    }
}

/// Nesterov-Todd scaling of one block.
pub enum BlockScaling {
    NonNeg {
        w: Vec<f64>,
    },
    Soc {
        v: Vec<f64>,
        beta: f64,
    },
    Psd {
        r: RMat,
        rti: RMat,
    },
}

/// Scaling of the full product cone, with the scaled point lambda
/// (lambda = W z = W^{-T} x).
pub struct NtScaling {
    pub per_block: Vec<BlockScaling>,
    pub lambda: RVec,
}

#[derive(Clone, Copy)]
enum Apply {
    W,
    Wt,
    Winv,
    Wtinv,
}

/// Compute the NT scaling for an interior pair (x, z). Returns None if
/// either point has drifted out of the interior numerically.
pub fn compute_scaling(layout: &ConeLayout, x: &RVec, z: &RVec) -> Option<NtScaling> {
    let mut per_block = Vec::with_capacity(layout.blocks.len());
    for (blk, &off) in layout.blocks.iter().zip(&layout.offsets) {
        match *blk {
            ConeBlock::NonNeg(k) => {
                let mut w = Vec::with_capacity(k);
                for i in 0..k {
                    let (xi, zi) = (x[off + i], z[off + i]);
                    if !(xi > 0.0 && zi > 0.0) {
                        return None;
                    }
                    w.push((xi / zi).sqrt());
                }
                per_block.push(BlockScaling::NonNeg { w });
            }
            ConeBlock::Soc(k) => {
                let xs = &x.as_slice()[off..off + k];
                let zs = &z.as_slice()[off..off + k];
                let jd = |u: &[f64]| {
                    let mut sq = 0.0;
                    for i in 1..k {
                        sq += u[i] * u[i];
                    }
                    u[0] * u[0] - sq
                };
                let (jx, jz) = (jd(xs), jd(zs));
                if !(jx > 0.0 && jz > 0.0 && xs[0] > 0.0 && zs[0] > 0.0) {
                    return None;
                }
                let (sx, sz) = (jx.sqrt(), jz.sqrt());
                let mut dot = 0.0;
                for i in 0..k {
                    dot += xs[i] * zs[i];
                }
                let gamma = ((1.0 + dot / (sx * sz)) / 2.0).sqrt();
                // w = (x/sx + J z/sz) / (2 gamma) is the unit hyperbolic
                // scaling point; v = (w + e)/sqrt(2(1 + w0)) is its
                // half-angle vector, so that (2vv' - J)^2 = 2ww' - J.
                let mut w = Vec::with_capacity(k);
                w.push((xs[0] / sx + zs[0] / sz) / (2.0 * gamma));
                for i in 1..k {
                    w.push((xs[i] / sx - zs[i] / sz) / (2.0 * gamma));
                }
                let c = (2.0 * (1.0 + w[0])).sqrt();
                let mut v = w;
                v[0] += 1.0;
                for item in v.iter_mut() {
                    *item /= c;
                }
                per_block.push(BlockScaling::Soc {
                    v,
                    beta: (sx / sz).sqrt(),
                });
            }
            ConeBlock::Psd(k) => {
                let sd = svec_dim(k);
                let xm = smat(&x.as_slice()[off..off + sd], k);
                let zm = smat(&z.as_slice()[off..off + sd], k);
                let lx = xm.cholesky()?.l();
                let lz = zm.cholesky()?.l();
                let svd = (lz.transpose() * &lx).svd(true, true);
                let u = svd.u.as_ref()?;
                let vt = svd.v_t.as_ref()?;
                let mut sig_isqrt = DMatrix::zeros(k, k);
                for i in 0..k {
                    let s = svd.singular_values[i];
                    if !(s > 0.0) {
                        return None;
                    }
                    sig_isqrt[(i, i)] = 1.0 / s.sqrt();
                }
                let r = &lx * vt.transpose() * &sig_isqrt;
                let rti = &lz * u * &sig_isqrt;
                per_block.push(BlockScaling::Psd { r, rti });
            }
            ConeBlock::Zero(_) => unreachable!(),
        }
    }
    let scaling = NtScaling {
        per_block,
        lambda: RVec::zeros(layout.dim),
    };
    let lambda = scaling.apply(layout, z, Apply::W);
    Some(NtScaling { lambda, ..scaling })
}

impl NtScaling {
    fn apply(&self, layout: &ConeLayout, u: &RVec, which: Apply) -> RVec {
        let mut out = RVec::zeros(layout.dim);
        for ((blk, &off), sc) in layout
            .blocks
            .iter()
            .zip(&layout.offsets)
            .zip(&self.per_block)
        {
            match (blk, sc) {
                (ConeBlock::NonNeg(k), BlockScaling::NonNeg { w }) => {
                    for i in 0..*k {
                        out[off + i] = match which {
                            Apply::W | Apply::Wt => w[i] * u[off + i],
                            Apply::Winv | Apply::Wtinv => u[off + i] / w[i],
                        };
                    }
                }
                (ConeBlock::Soc(k), BlockScaling::Soc { v, beta }) => {
                    let us = &u.as_slice()[off..off + k];
                    // W u = beta (2 v (v.u) - J u); W^{-1} u = (2 Jv (Jv.u) - J u)/beta.
                    let inv = matches!(which, Apply::Winv | Apply::Wtinv);
                    let mut vv = v.clone();
                    if inv {
                        for item in vv.iter_mut().skip(1) {
                            *item = -*item;
                        }
                    }
                    let mut dot = 0.0;
                    for i in 0..*k {
                        dot += vv[i] * us[i];
                    }
                    let scale = if inv { 1.0 / beta } else { *beta };
                    out[off] = scale * (2.0 * vv[0] * dot - us[0]);
                    for i in 1..*k {
                        out[off + i] = scale * (2.0 * vv[i] * dot + us[i]);
                    }
                }
                (ConeBlock::Psd(k), BlockScaling::Psd { r, rti }) => {
                    let sd = svec_dim(*k);
                    let um = smat(&u.as_slice()[off..off + sd], *k);
                    let p = match which {
                        Apply::W => r.clone(),
                        Apply::Wt => r.transpose(),
                        Apply::Winv => rti.transpose(),
                        Apply::Wtinv => rti.clone(),
                    };
                    let res = p.transpose() * um * &p;
                    // Symmetrize away factorization round-off.
                    let res = (&res + res.transpose()).scale(0.5);
                    let sv = svec(&res);
                    out.rows_mut(off, sd).copy_from(&sv);
                }
                _ => unreachable!(),
            }
        }
        out
    }

    pub fn w(&self, layout: &ConeLayout, u: &RVec) -> RVec {
        self.apply(layout, u, Apply::W)
    }
    pub fn wt(&self, layout: &ConeLayout, u: &RVec) -> RVec {
        self.apply(layout, u, Apply::Wt)
    }
    pub fn winv(&self, layout: &ConeLayout, u: &RVec) -> RVec {
        self.apply(layout, u, Apply::Winv)
    }
    pub fn wtinv(&self, layout: &ConeLayout, u: &RVec) -> RVec {
        self.apply(layout, u, Apply::Wtinv)
    }

    /// H^{-1} u = W^T W u.
    pub fn hinv(&self, layout: &ConeLayout, u: &RVec) -> RVec {
        let t = self.w(layout, u);
        self.wt(layout, &t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn layout() -> ConeLayout {
        ConeLayout::new(&[ConeBlock::NonNeg(2), ConeBlock::Soc(3), ConeBlock::Psd(3)])
    }

    fn random_interior(rng: &mut StdRng, lt: &ConeLayout) -> RVec {
        let mut v = RVec::zeros(lt.dim);
        // nonneg
        v[0] = rng.gen::<f64>() + 0.2;
        v[1] = rng.gen::<f64>() + 0.2;
        // soc
        let t1 = rng.gen::<f64>() - 0.5;
        let t2 = rng.gen::<f64>() - 0.5;
        v[2] = (t1 * t1 + t2 * t2).sqrt() + 0.3 + rng.gen::<f64>();
        v[3] = t1;
        v[4] = t2;
        // psd: A A^T + 0.2 I
        let a = RMat::from_fn(3, 3, |_, _| rng.gen::<f64>() - 0.5);
        let p = &a * a.transpose() + RMat::identity(3, 3).scale(0.2);
        let sv = svec(&p);
        v.rows_mut(5, sv.len()).copy_from(&sv);
        v
    }

    #[test]
    fn svec_round_trip_preserves_inner_product() {
        let mut rng = StdRng::seed_from_u64(2);
        for _ in 0..20 {
            let a = RMat::from_fn(4, 4, |_, _| rng.gen::<f64>() - 0.5);
            let a = (&a + a.transpose()).scale(0.5);
            let b = RMat::from_fn(4, 4, |_, _| rng.gen::<f64>() - 0.5);
            let b = (&b + b.transpose()).scale(0.5);
            let frob = (&a * &b).trace();
            let dot = svec(&a).dot(&svec(&b));
            assert!((frob - dot).abs() < 1e-12);
            assert!((smat(svec(&a).as_slice(), 4) - &a).norm() < 1e-14);
        }
    }

    #[test]
    fn nt_scaling_identities() {
        let lt = layout();
        let mut rng = StdRng::seed_from_u64(4);
        for _ in 0..25 {
            let x = random_interior(&mut rng, &lt);
            let z = random_interior(&mut rng, &lt);
            let sc = compute_scaling(&lt, &x, &z).expect("interior");
            // lambda = W z = W^{-T} x
            let lam_z = sc.w(&lt, &z);
            let lam_x = sc.wtinv(&lt, &x);
            assert!((&lam_z - &lam_x).norm() < 1e-9 * (1.0 + lam_z.norm()));
            assert!(lt.is_interior(&sc.lambda));
            // Round trips.
            let u = random_interior(&mut rng, &lt);
            let rt = sc.winv(&lt, &sc.w(&lt, &u));
            assert!((&rt - &u).norm() < 1e-10 * (1.0 + u.norm()));
            let rt2 = sc.wtinv(&lt, &sc.wt(&lt, &u));
            assert!((&rt2 - &u).norm() < 1e-10 * (1.0 + u.norm()));
            // H and H^{-1} compose to the identity.
            let hu = sc.winv(&lt, &sc.wtinv(&lt, &u));
            let hh = sc.hinv(&lt, &hu);
            assert!((&hh - &u).norm() < 1e-9 * (1.0 + u.norm()));
            // <x, z> is preserved by the scaling.
            let ip = x.dot(&z);
            let ip_scaled = sc.lambda.dot(&sc.lambda);
            assert!((ip - ip_scaled).abs() < 1e-9 * (1.0 + ip.abs()));
        }
    }

    #[test]
    fn jordan_inverse_solves_product() {
        let lt = layout();
        let mut rng = StdRng::seed_from_u64(6);
        for _ in 0..25 {
            let x = random_interior(&mut rng, &lt);
            let z = random_interior(&mut rng, &lt);
            let sc = compute_scaling(&lt, &x, &z).expect("interior");
            let b = random_interior(&mut rng, &lt);
            let w = lt.jordan_linv(&sc.lambda, &b);
            let back = lt.jordan_mul(&sc.lambda, &w);
            assert!((&back - &b).norm() < 1e-9 * (1.0 + b.norm()));
        }
    }

    #[test]
    fn step_to_boundary_is_exact() {
        let lt = layout();
        let mut rng = StdRng::seed_from_u64(8);
        for _ in 0..40 {
            let x = random_interior(&mut rng, &lt);
            let z = random_interior(&mut rng, &lt);
            let sc = compute_scaling(&lt, &x, &z).expect("interior");
            let d = RVec::from_fn(lt.dim, |_, _| rng.gen::<f64>() - 0.5);
            let alpha = lt.step_to_boundary(&sc.lambda, &d);
            if alpha.is_finite() {
                let just_inside = &sc.lambda + d.scale(alpha * (1.0 - 1e-9));
                assert!(
                    lt.infeasibility(&just_inside) < 1e-7,
                    "point just inside the step should be near the cone"
                );
                let outside = &sc.lambda + d.scale(alpha * (1.0 + 1e-6) + 1e-12);
                assert!(!lt.is_interior(&outside), "step should reach the boundary");
            }
        }
    }
}
