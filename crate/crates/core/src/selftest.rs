//! Built-in oracle suite behind the `selftest` command: closed forms
//! against hand values, Charnes-Cooper against bisection, rank-reduction
//! preservation, and the kernel identities, all on fixed seeds.

use rand::Rng;

use crate::channel::{draw_realization, make_geometry, trial_rng, NetworkRealization, SystemParams};
use crate::conic::embed_hermitian;
use crate::fracrank::{bisection_oracle, rank_reduce, solve_fractional, FracOutcome};
use crate::numkernel::{hermitian_part, kron, vec_mat, CMat, CVec, C64, RANK_TOL};
use crate::strategies::{
    af_fractional_spec, design_dfsup, design_dfxor, CancelSet, DecodeIndicators, DesignOptions,
    DesignOutcome, RateRequirements,
};

/// Deliberate perturbations for mutation-sanity tests of the suite itself.
#[derive(Debug, Clone, Copy, Default)]
pub struct SelftestFaults {
    /// Added to the XOR closed-form secondary power before checking.
    pub closed_form_offset: f64,
}

#[derive(Debug, Clone)]
pub struct SelftestCheck {
    pub name: &'static str,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct SelftestReport {
    pub checks: Vec<SelftestCheck>,
}

impl SelftestReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&format!(
                "{} {:<42} measured {:>12.3e}  tol {:>9.1e}\n",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.measured,
                c.tolerance
            ));
        }
        s
    }
}

fn check(name: &'static str, measured: f64, tolerance: f64) -> SelftestCheck {
    SelftestCheck {
        name,
        measured,
        tolerance,
        pass: measured.is_finite() && measured <= tolerance,
    }
}

fn unit_collinear(m: usize, p_c: f64) -> NetworkRealization {
    let mut e1 = CVec::zeros(m);
    e1[0] = C64::new(1.0, 0.0);
    NetworkRealization {
        params: SystemParams {
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
        },
        h_a: e1.clone(),
        h_b: e1.clone(),
        g_a: e1.clone(),
        g_b: e1.clone(),
        g_d: e1,
        h_ad: C64::new(1.0, 0.0),
        h_bd: C64::new(1.0, 0.0),
    }
}

fn random_realization(seed: u64, m: usize) -> NetworkRealization {
    let geo = make_geometry(0.5, 1.0).unwrap();
    let params = SystemParams {
        m,
        p_a: 2.0,
        p_b: 2.0,
        p_c: 8.0,
        sigma2_a: 1.0,
        sigma2_b: 1.0,
        sigma2_c: 1.0,
        sigma2_d: 1.0,
        atten: 1.0,
        exponent: 3.0,
        mac_sum_uses_pb: false,
    };
    draw_realization(&geo, &params, &mut trial_rng(seed, 0)).unwrap()
}

/// Run the whole suite; a default `SelftestFaults` runs it faithfully.
pub fn run_selftest(faults: &SelftestFaults) -> SelftestReport {
    let mut checks = Vec::new();
    let no_ic = DecodeIndicators { a_a: true, a_b: true };
    let opts = DesignOptions::default();

    // XOR closed form on the unit collinear instance: q = 4.5, w = 5.5.
    {
        let real = unit_collinear(2, 10.0);
        let reqs = RateRequirements::new(0.5, 0.5).unwrap();
        let measured = match design_dfxor(&real, &reqs, &no_ic, false, &opts) {
            Ok(DesignOutcome::Feasible(d)) => {
                let q = d.su_power + faults.closed_form_offset;
                (q - 4.5).abs().max((d.relay_power - 5.5).abs())
            }
            _ => f64::INFINITY,
        };
        checks.push(check("dfxor closed form q=4.5 w=5.5", measured, 1e-12));
    }

    // Superposition closed form: q = 8/3, each relay beam 11/3.
    {
        let real = unit_collinear(2, 10.0);
        let reqs = RateRequirements::new(0.5, 0.5).unwrap();
        let measured = match design_dfsup(&real, &reqs, &no_ic, CancelSet::None, &opts) {
            Ok(DesignOutcome::Feasible(d)) => (d.su_power - 8.0 / 3.0)
                .abs()
                .max((d.relay_power - 22.0 / 3.0).abs()),
            _ => f64::INFINITY,
        };
        checks.push(check("dfsup closed form q=8/3 w=11/3", measured, 1e-12));
    }

    // Charnes-Cooper vs bisection on a fixed random AF instance.
    {
        let real = random_realization(20240601, 2);
        let reqs = RateRequirements::new(0.4, 0.4).unwrap();
        let spec = af_fractional_spec(&real, &reqs, &no_ic).unwrap();
        let measured = match (
            solve_fractional(&spec, &opts.solver),
            bisection_oracle(&spec, 1e-8, &opts.solver),
        ) {
            (Ok(FracOutcome::Solved(cc)), Ok(FracOutcome::Solved(b))) => {
                (cc.objective - b.objective).abs() / (1.0 + b.objective.abs())
            }
            _ => f64::INFINITY,
        };
        checks.push(check("charnes-cooper vs bisection (af)", measured, 1e-5));
    }

    // Closed form vs forced-numeric SDP on a fixed degenerate instance.
    {
        let base = random_realization(20240602, 3);
        let mut rng = trial_rng(20240603, 0);
        let dir = CVec::from_fn(3, |_, _| {
            C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let mut real = base;
        real.g_a = &dir * C64::new(1.0 + rng.gen::<f64>(), 0.2);
        real.g_b = &dir * C64::new(0.5 + rng.gen::<f64>(), -0.4);
        real.g_d = &dir * C64::new(0.8 + rng.gen::<f64>(), 0.1);
        let reqs = RateRequirements::new(0.4, 0.4).unwrap();
        let forced = DesignOptions {
            force_numeric: true,
            ..opts
        };
        let mut worst = 0.0f64;
        let pairs = [
            (
                design_dfxor(&real, &reqs, &no_ic, false, &opts),
                design_dfxor(&real, &reqs, &no_ic, false, &forced),
            ),
            (
                design_dfsup(&real, &reqs, &no_ic, CancelSet::None, &opts),
                design_dfsup(&real, &reqs, &no_ic, CancelSet::None, &forced),
            ),
        ];
        for (c, s) in pairs {
            match (c, s) {
                (Ok(DesignOutcome::Feasible(c)), Ok(DesignOutcome::Feasible(s))) => {
                    worst = worst.max((c.su_sinr - s.su_sinr).abs() / (1.0 + c.su_sinr.abs()));
                }
                (Ok(DesignOutcome::Infeasible), Ok(DesignOutcome::Infeasible)) => {}
                _ => worst = f64::INFINITY,
            }
        }
        checks.push(check("closed form vs sdp (degenerate)", worst, 1e-5));
    }

    // Rank reduction preserves every functional on a fixed AF solve.
    {
        let real = random_realization(20240604, 2);
        let reqs = RateRequirements::new(0.4, 0.4).unwrap();
        let spec = af_fractional_spec(&real, &reqs, &no_ic).unwrap();
        let measured = match solve_fractional(&spec, &opts.solver) {
            Ok(FracOutcome::Solved(cc)) => {
                let mut functionals = vec![spec.denominator.clone()];
                for c in &spec.constraints {
                    functionals.push(c.coeffs.clone());
                }
                functionals.push(spec.budget.clone());
                match rank_reduce(&cc.scaled_blocks, &functionals, RANK_TOL) {
                    Ok(reduced) => {
                        let mut worst = 0.0f64;
                        for f in &functionals {
                            let v0 =
                                crate::fracrank::FractionalSdpSpec::eval(f, &cc.scaled_blocks);
                            let v = crate::fracrank::FractionalSdpSpec::eval(f, &reduced);
                            worst = worst.max((v - v0).abs() / (1.0 + v0.abs()));
                        }
                        worst
                    }
                    Err(_) => f64::INFINITY,
                }
            }
            _ => f64::INFINITY,
        };
        checks.push(check("rank reduction preserves functionals", measured, 1e-7));
    }

    // Kernel identities: trace/Kronecker rule and embedding eigenvalue
    // doubling on fixed seeds.
    {
        let mut rng = trial_rng(20240605, 0);
        let mut worst = 0.0f64;
        for _ in 0..200 {
            let m = 2 + (rng.gen::<u32>() % 3) as usize;
            let rnd = |rng: &mut rand_chacha::ChaCha12Rng| {
                CMat::from_fn(m, m, |_, _| {
                    C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
                })
            };
            let (a, b, c, d) = (rnd(&mut rng), rnd(&mut rng), rnd(&mut rng), rnd(&mut rng));
            let lhs = (&a * &b * &c * &d).trace();
            let rhs = (vec_mat(&d.transpose()).transpose() * kron(&c.transpose(), &a) * vec_mat(&b))
                [(0, 0)];
            worst = worst.max((lhs - rhs).norm());

            let h = hermitian_part(&rnd(&mut rng));
            let emb = embed_hermitian(&h).unwrap();
            let mut ev: Vec<f64> = emb.symmetric_eigen().eigenvalues.iter().cloned().collect();
            ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let hv = crate::numkernel::hermitian_eig(&h, RANK_TOL).unwrap().values;
            for k in 0..m {
                let lam = hv[m - 1 - k];
                worst = worst.max((ev[2 * k] - lam).abs().max((ev[2 * k + 1] - lam).abs()));
            }
        }
        checks.push(check("kernel trace/kron + embedding identities", worst, 1e-10));
    }

    SelftestReport { checks }
}
