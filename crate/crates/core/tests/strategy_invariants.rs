//! Cross-method and structural invariants of the strategy designers:
//! Charnes-Cooper vs bisection, closed forms vs the generic numeric path,
//! constraint activity, phase invariance, monotonicity in the power budget
//! and beamformer support.

use cogrelay_core::channel::{
    draw_realization, make_geometry, trial_rng, NetworkRealization, SystemParams,
};
use cogrelay_core::fracrank::{bisection_oracle, FracOutcome};
use cogrelay_core::numkernel::{CVec, C64};
use cogrelay_core::strategies::{
    build_basis, design_af, design_dfsup, design_dfxor, evaluate_rates, CancelSet,
    DecodeIndicators, DesignOptions, DesignOutcome, Precoders, RateRequirements, SolvePath,
};
use rand::Rng;

fn params(m: usize, p_c: f64) -> SystemParams {
    SystemParams {
        m,
        p_a: 2.0,
        p_b: 2.0,
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

fn random_real(m: usize, p_c: f64, seed: u64) -> NetworkRealization {
    let geo = make_geometry(0.5, 1.0).unwrap();
    let mut rng = trial_rng(seed, 0);
    draw_realization(&geo, &params(m, p_c), &mut rng).unwrap()
}

/// Collinear downlink channels with random complex scales: forces N = 1.
fn degenerate_real(m: usize, p_c: f64, seed: u64) -> NetworkRealization {
    let base = random_real(m, p_c, seed);
    let mut rng = trial_rng(seed, 1);
    let dir = CVec::from_fn(m, |_, _| {
        C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
    });
    let scale = |rng: &mut rand_chacha::ChaCha12Rng| {
        C64::new(rng.gen::<f64>() + 0.3, rng.gen::<f64>() - 0.5)
    };
    NetworkRealization {
        g_a: &dir * scale(&mut rng),
        g_b: &dir * scale(&mut rng),
        g_d: &dir * scale(&mut rng),
        ..base
    }
}

fn no_ic() -> DecodeIndicators {
    DecodeIndicators { a_a: true, a_b: true }
}

fn full_ic() -> DecodeIndicators {
    DecodeIndicators {
        a_a: false,
        a_b: false,
    }
}

#[test]
fn af_matches_bisection_on_random_instances() {
    let reqs = RateRequirements::new(0.4, 0.4).unwrap();
    let opts = DesignOptions::default();
    let mut feasible = 0;
    for seed in 0..12u64 {
        let m = 2 + (seed % 2) as usize;
        let real = random_real(m, 8.0, 1000 + seed);
        let ind = no_ic();
        let out = design_af(&real, &reqs, &ind, &opts).unwrap();
        let spec = cogrelay_core::strategies::af_fractional_spec(&real, &reqs, &ind).unwrap();
        let oracle = bisection_oracle(&spec, 1e-8, &opts.solver).unwrap();
        match (out, oracle) {
            (DesignOutcome::Feasible(d), FracOutcome::Solved(b)) => {
                feasible += 1;
                let rel = (d.su_sinr - b.objective).abs() / (1.0 + b.objective.abs());
                assert!(
                    rel < 1e-5,
                    "seed {seed}: design {} vs bisection {}",
                    d.su_sinr,
                    b.objective
                );
            }
            (DesignOutcome::Infeasible, FracOutcome::Infeasible) => {}
            (a, b) => panic!("seed {seed}: feasibility disagreement: {a:?} vs {b:?}"),
        }
    }
    assert!(feasible >= 6, "want mostly feasible draws, got {feasible}");
}

#[test]
fn dfxor_closed_form_agrees_with_forced_sdp() {
    let reqs = RateRequirements::new(0.6, 0.6).unwrap();
    for seed in 0..8u64 {
        let m = 2 + (seed % 3) as usize;
        let real = degenerate_real(m, 12.0, 2000 + seed);
        let ind = no_ic();
        let closed = design_dfxor(&real, &reqs, &ind, false, &DesignOptions::default()).unwrap();
        let forced = DesignOptions {
            force_numeric: true,
            ..Default::default()
        };
        let numeric = design_dfxor(&real, &reqs, &ind, false, &forced).unwrap();
        match (closed, numeric) {
            (DesignOutcome::Feasible(c), DesignOutcome::Feasible(s)) => {
                assert_eq!(c.path, SolvePath::ClosedForm);
                assert_eq!(s.path, SolvePath::Sdp);
                let rel = (c.su_sinr - s.su_sinr).abs() / (1.0 + c.su_sinr.abs());
                assert!(rel < 1e-5, "seed {seed}: {} vs {}", c.su_sinr, s.su_sinr);
            }
            (DesignOutcome::Infeasible, DesignOutcome::Infeasible) => {}
            (c, s) => panic!("seed {seed}: dispatch disagreement {c:?} vs {s:?}"),
        }
    }
}

#[test]
fn dfsup_closed_form_agrees_with_forced_sdp() {
    let reqs = RateRequirements::new(0.7, 0.3).unwrap();
    for seed in 0..8u64 {
        let m = 2 + (seed % 3) as usize;
        let real = degenerate_real(m, 12.0, 3000 + seed);
        let ind = no_ic();
        let closed =
            design_dfsup(&real, &reqs, &ind, CancelSet::None, &DesignOptions::default()).unwrap();
        let forced = DesignOptions {
            force_numeric: true,
            ..Default::default()
        };
        let numeric = design_dfsup(&real, &reqs, &ind, CancelSet::None, &forced).unwrap();
        match (closed, numeric) {
            (DesignOutcome::Feasible(c), DesignOutcome::Feasible(s)) => {
                assert_eq!(c.path, SolvePath::ClosedForm);
                let rel = (c.su_sinr - s.su_sinr).abs() / (1.0 + c.su_sinr.abs());
                assert!(rel < 1e-5, "seed {seed}: {} vs {}", c.su_sinr, s.su_sinr);
            }
            (DesignOutcome::Infeasible, DesignOutcome::Infeasible) => {}
            (c, s) => panic!("seed {seed}: dispatch disagreement {c:?} vs {s:?}"),
        }
    }
}

#[test]
fn dfsup_both_canceled_closed_form_agrees_with_forced_sdp() {
    let reqs = RateRequirements::new(0.5, 0.5).unwrap();
    for seed in 0..8u64 {
        let real = random_real(3, 10.0, 4000 + seed);
        let ind = full_ic();
        let closed =
            design_dfsup(&real, &reqs, &ind, CancelSet::Both, &DesignOptions::default()).unwrap();
        let forced = DesignOptions {
            force_numeric: true,
            ..Default::default()
        };
        let numeric = design_dfsup(&real, &reqs, &ind, CancelSet::Both, &forced).unwrap();
        match (closed, numeric) {
            (DesignOutcome::Feasible(c), DesignOutcome::Feasible(s)) => {
                assert_eq!(c.path, SolvePath::ClosedForm);
                let rel = (c.su_sinr - s.su_sinr).abs() / (1.0 + c.su_sinr.abs());
                assert!(rel < 1e-5, "seed {seed}: {} vs {}", c.su_sinr, s.su_sinr);
            }
            (DesignOutcome::Infeasible, DesignOutcome::Infeasible) => {}
            (c, s) => panic!("seed {seed}: dispatch disagreement {c:?} vs {s:?}"),
        }
    }
}

#[test]
fn global_phase_leaves_sinrs_unchanged() {
    let reqs = RateRequirements::new(0.5, 0.5).unwrap();
    let real = random_real(3, 10.0, 5000);
    let ind = no_ic();
    let out = design_dfsup(&real, &reqs, &ind, CancelSet::None, &DesignOptions::default()).unwrap();
    let DesignOutcome::Feasible(d) = out else {
        return;
    };
    let before = evaluate_rates(&d, &real, &ind);
    let phase = C64::from_polar(1.0, 1.234);
    let mut rotated = d.clone();
    if let Precoders::DfSup { relay_a, relay_b, su } = &mut rotated.precoders {
        *relay_a = relay_a.clone() * phase;
        *relay_b = relay_b.clone() * phase;
        *su = su.clone() * phase;
    }
    let after = evaluate_rates(&rotated, &real, &ind);
    assert!((before.su_sinr - after.su_sinr).abs() <= 1e-10 * (1.0 + before.su_sinr));
    for k in 0..2 {
        assert!((before.pu_sinr[k] - after.pu_sinr[k]).abs() <= 1e-10 * (1.0 + before.pu_sinr[k]));
    }
}

#[test]
fn su_sinr_is_monotone_in_power_budget() {
    let reqs = RateRequirements::new(0.5, 0.5).unwrap();
    let ind = no_ic();
    let mut last: f64 = -1.0;
    for (k, p_c) in [4.0, 6.0, 8.0, 12.0, 16.0].into_iter().enumerate() {
        let mut real = random_real(3, p_c, 6000);
        real.params.p_c = p_c;
        let out = design_af(&real, &reqs, &ind, &DesignOptions::default()).unwrap();
        if let DesignOutcome::Feasible(d) = out {
            assert!(
                d.su_sinr >= last - 1e-6 * (1.0 + last.abs()),
                "step {k}: {} < {last}",
                d.su_sinr
            );
            last = d.su_sinr;
        } else {
            assert_eq!(last, -1.0, "feasibility cannot be lost as P_C grows");
        }
    }
    assert!(last > 0.0, "largest budget must be feasible");
}

#[test]
fn su_beamformer_lies_in_channel_span() {
    let reqs = RateRequirements::new(0.5, 0.5).unwrap();
    for seed in 0..4u64 {
        let real = random_real(4, 10.0, 7000 + seed);
        let ind = no_ic();
        let basis = build_basis(&real).unwrap();
        let out = design_af(&real, &reqs, &ind, &DesignOptions::default()).unwrap();
        if let DesignOutcome::Feasible(d) = out {
            let q = d.precoders.su_beamformer();
            let resid = q - &basis.u * (basis.u.adjoint() * q);
            assert!(resid.norm() <= 1e-8 * (1.0 + q.norm()), "{}", resid.norm());
        }
    }
}

#[test]
fn dfxor_ic_beam_stays_in_pair_span() {
    let reqs = RateRequirements::new(0.5, 0.5).unwrap();
    for seed in 0..4u64 {
        let real = random_real(4, 10.0, 8000 + seed);
        let ind = full_ic();
        let out = design_dfxor(&real, &reqs, &ind, true, &DesignOptions::default()).unwrap();
        if let DesignOutcome::Feasible(d) = out {
            assert_eq!(d.path, SolvePath::Socp);
            let Precoders::DfXor { relay, .. } = &d.precoders else {
                panic!()
            };
            let pair = cogrelay_core::numkernel::orthonormal_basis(
                &[real.g_a.conjugate(), real.g_b.conjugate()],
                1e-7,
            )
            .unwrap();
            let resid = relay - &pair * (pair.adjoint() * relay);
            assert!(
                resid.norm() <= 1e-6 * (1.0 + relay.norm()),
                "{}",
                resid.norm()
            );
        }
    }
}

#[test]
fn closed_form_activity_under_perturbation() {
    // Instances collinear up to 1e-9 still dispatch to the closed form and
    // match the forced-numeric objective.
    let reqs = RateRequirements::new(0.5, 0.5).unwrap();
    let ind = no_ic();
    for seed in 0..4u64 {
        let mut real = degenerate_real(3, 12.0, 9000 + seed);
        let mut rng = trial_rng(9100 + seed, 0);
        let jitter = CVec::from_fn(3, |_, _| {
            C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5) * 1e-9
        });
        real.g_a += jitter;
        let closed = design_dfxor(&real, &reqs, &ind, false, &DesignOptions::default()).unwrap();
        if let DesignOutcome::Feasible(d) = &closed {
            assert_eq!(d.path, SolvePath::ClosedForm);
            // Activity of the closed form: power tight, PU SINRs at gamma
            // for the binding user.
            assert!((d.total_power() - real.params.p_c).abs() <= 1e-9 * real.params.p_c);
            let slack = d
                .pu_sinr
                .iter()
                .map(|s| (s - reqs.gamma).abs())
                .fold(f64::INFINITY, f64::min);
            assert!(slack <= 1e-9 * (1.0 + reqs.gamma));
        }
        let forced = DesignOptions {
            force_numeric: true,
            ..Default::default()
        };
        let numeric = design_dfxor(&real, &reqs, &ind, false, &forced).unwrap();
        if let (DesignOutcome::Feasible(c), DesignOutcome::Feasible(s)) = (&closed, &numeric) {
            let rel = (c.su_sinr - s.su_sinr).abs() / (1.0 + c.su_sinr.abs());
            assert!(rel < 1e-5, "{} vs {}", c.su_sinr, s.su_sinr);
        }
    }
}
