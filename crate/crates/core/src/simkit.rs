//! Monte Carlo experiment engine: independent trials over channel draws,
//! per-strategy design outcomes, sweep orchestration and aggregation into
//! rate / outage / power-share statistics.
//!
//! Trials use counter-based random substreams keyed by (seed, trial index),
//! and within a trial every strategy sees the same realization, so
//! comparisons between strategies are paired. Aggregation folds in trial
//! order, which keeps the output byte-identical for any worker count.

use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{
    db_to_linear, draw_realization, make_geometry, trial_rng, ChannelError, Geometry,
    NetworkRealization, SystemParams,
};
use crate::strategies::{
    design_af, design_dfsup, design_dfxor, mac_region_check, sic_decode_indicators, CancelSet,
    DecodeIndicators, DesignError, DesignOptions, DesignOutcome, RateRequirements, SolvePath,
    Strategy,
};

/// How outage trials enter the mean SU rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateMode {
    /// Average over feasible trials only.
    Conditional,
    /// Outage trials contribute zero rate.
    ZeroFill,
}

impl RateMode {
    pub fn name(&self) -> &'static str {
        match self {
            RateMode::Conditional => "conditional",
            RateMode::ZeroFill => "zero_fill",
        }
    }
}

/// Full experiment configuration. Powers are in dB and converted at the
/// boundary; the library below this type works in linear units.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub strategies: Vec<Strategy>,
    pub m: usize,
    pub d_ab: f64,
    pub d_ac: f64,
    /// Primary transmit power (both PUs), dB.
    pub p_db: f64,
    /// Secondary node power budget, dB.
    pub pc_db: f64,
    pub sigma2: f64,
    /// Path-loss attenuation constant.
    pub atten: f64,
    /// Path-loss exponent.
    pub exponent: f64,
    /// Rate split: R_A = alpha R, R_B = (1 - alpha) R.
    pub alpha: f64,
    /// Sum-rate factor: R = k R_0.
    pub k: f64,
    pub trials: usize,
    pub seed: u64,
    pub rate_mode: RateMode,
    /// Fraction of numerical failures a run may accumulate before the CLI
    /// reports failure.
    pub numfail_budget: f64,
    pub mac_sum_uses_pb: bool,
    /// Sweep grids.
    pub pc_grid_db: Vec<f64>,
    pub dac_grid: Vec<f64>,
    pub m_grid: Vec<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            strategies: vec![Strategy::Af, Strategy::DfXor, Strategy::DfSup],
            m: 4,
            d_ab: 1.0,
            d_ac: 0.5,
            p_db: 5.0,
            pc_db: 10.0,
            sigma2: 1.0,
            atten: 1.0,
            exponent: 3.0,
            alpha: 0.5,
            k: 1.0,
            trials: 400,
            seed: 1,
            rate_mode: RateMode::Conditional,
            numfail_budget: 0.05,
            mac_sum_uses_pb: false,
            pc_grid_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            dac_grid: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
            m_grid: vec![2, 3, 4, 5, 6],
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("every trial failed numerically")]
    AllTrialsFailed,
    #[error(transparent)]
    Design(#[from] DesignError),
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.trials == 0 {
            return Err(SimError::InvalidConfig("trials must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(SimError::InvalidConfig(format!(
                "alpha={} outside [0, 1]",
                self.alpha
            )));
        }
        if !(self.k > 0.0) {
            return Err(SimError::InvalidConfig(format!("k={} must be > 0", self.k)));
        }
        if self.strategies.is_empty() {
            return Err(SimError::InvalidConfig("strategy set is empty".into()));
        }
        Ok(())
    }

    /// Baseline rate R_0 = 1/2 log2(1 + P d_AB^2 / sigma^2).
    pub fn base_rate(&self) -> f64 {
        let p = db_to_linear(self.p_db);
        0.5 * (1.0 + p * self.d_ab * self.d_ab / self.sigma2).log2()
    }

    pub fn rate_requirements(&self) -> Result<RateRequirements, SimError> {
        let r = self.k * self.base_rate();
        Ok(RateRequirements::new(self.alpha * r, (1.0 - self.alpha) * r)?)
    }
}

/// One sweep point, fully resolved into linear-scale parameters.
#[derive(Debug, Clone)]
pub struct TrialSetup {
    pub geometry: Geometry,
    pub params: SystemParams,
    pub reqs: RateRequirements,
}

/// Swept quantity of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    PcDb,
    DAc,
    M,
}

impl SimConfig {
    /// Resolve a sweep point; `axis` overrides the matching scalar field.
    pub fn setup(&self, axis: Option<(SweepAxis, f64)>) -> Result<TrialSetup, SimError> {
        self.validate()?;
        let mut pc_db = self.pc_db;
        let mut d_ac = self.d_ac;
        let mut m = self.m;
        match axis {
            Some((SweepAxis::PcDb, v)) => pc_db = v,
            Some((SweepAxis::DAc, v)) => d_ac = v,
            Some((SweepAxis::M, v)) => m = v as usize,
            None => {}
        }
        let geometry = make_geometry(d_ac, self.d_ab)?;
        let p = db_to_linear(self.p_db);
        let params = SystemParams {
            m,
            p_a: p,
            p_b: p,
            p_c: db_to_linear(pc_db),
            sigma2_a: self.sigma2,
            sigma2_b: self.sigma2,
            sigma2_c: self.sigma2,
            sigma2_d: self.sigma2,
            atten: self.atten,
            exponent: self.exponent,
            mac_sum_uses_pb: self.mac_sum_uses_pb,
        };
        params.validate()?;
        Ok(TrialSetup {
            geometry,
            params,
            reqs: self.rate_requirements()?,
        })
    }

    pub fn grid(&self, axis: SweepAxis) -> Vec<f64> {
        match axis {
            SweepAxis::PcDb => self.pc_grid_db.clone(),
            SweepAxis::DAc => self.dac_grid.clone(),
            SweepAxis::M => self.m_grid.iter().map(|&m| m as f64).collect(),
        }
    }
}

/// Outcome of one strategy on one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrialStatus {
    Feasible,
    Outage,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct StrategyOutcome {
    pub strategy: Strategy,
    pub status: TrialStatus,
    pub su_rate: f64,
    /// Tr(Q_s) / P_C for feasible trials.
    pub power_share: f64,
    pub path: Option<SolvePath>,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub trial: usize,
    pub indicators: DecodeIndicators,
    pub mac_ok: bool,
    pub outcomes: Vec<StrategyOutcome>,
}

/// Run every configured strategy on a prepared realization. Decode-and-
/// forward strategies require the relay to actually decode, so a failed
/// multiple-access check is an outage for them; each DF design runs at the
/// largest admissible cancellation level.
pub fn run_prepared_trial(
    real: &NetworkRealization,
    reqs: &RateRequirements,
    strategies: &[Strategy],
    trial: usize,
    opts: &DesignOptions,
) -> Result<TrialRecord, SimError> {
    let ind = sic_decode_indicators(real, reqs);
    let mac_ok = mac_region_check(real, reqs);
    let p_c = real.params.p_c;
    let mut outcomes = Vec::with_capacity(strategies.len());
    for &strategy in strategies {
        let result: Result<DesignOutcome, DesignError> = match strategy {
            Strategy::Af => design_af(real, reqs, &ind, opts),
            Strategy::DfXor => {
                if mac_ok {
                    design_dfxor(real, reqs, &ind, ind.both_decoded(), opts)
                } else {
                    Ok(DesignOutcome::Infeasible)
                }
            }
            Strategy::DfSup => {
                if mac_ok {
                    design_dfsup(real, reqs, &ind, CancelSet::maximal(&ind), opts)
                } else {
                    Ok(DesignOutcome::Infeasible)
                }
            }
        };
        let outcome = match result {
            Ok(DesignOutcome::Feasible(d)) => StrategyOutcome {
                strategy,
                status: TrialStatus::Feasible,
                su_rate: d.su_rate,
                power_share: d.su_power / p_c,
                path: Some(d.path),
                iterations: d.iterations,
            },
            Ok(DesignOutcome::Infeasible) => StrategyOutcome {
                strategy,
                status: TrialStatus::Outage,
                su_rate: 0.0,
                power_share: 0.0,
                path: None,
                iterations: 0,
            },
            Err(DesignError::NumericalFailure(_)) => StrategyOutcome {
                strategy,
                status: TrialStatus::NumericalFailure,
                su_rate: 0.0,
                power_share: 0.0,
                path: None,
                iterations: 0,
            },
            Err(e) => return Err(e.into()),
        };
        outcomes.push(outcome);
    }
    Ok(TrialRecord {
        trial,
        indicators: ind,
        mac_ok,
        outcomes,
    })
}

/// Draw the (seed, trial)-keyed realization and run every strategy on it.
pub fn run_trial(
    cfg: &SimConfig,
    setup: &TrialSetup,
    trial: usize,
) -> Result<TrialRecord, SimError> {
    let mut rng = trial_rng(cfg.seed, trial as u64);
    let real = draw_realization(&setup.geometry, &setup.params, &mut rng)?;
    run_prepared_trial(
        &real,
        &setup.reqs,
        &cfg.strategies,
        trial,
        &DesignOptions::default(),
    )
}

/// Per-strategy aggregate over one sweep point.
#[derive(Debug, Clone)]
pub struct AggregateStats {
    pub strategy: Strategy,
    pub n_trials: usize,
    pub n_feasible: usize,
    pub n_outage: usize,
    pub n_numfail: usize,
    /// n_outage / (n_trials - n_numfail).
    pub outage_prob: f64,
    pub stderr_outage: f64,
    /// Mean SU rate over feasible trials; NaN when none were feasible.
    pub mean_rate_conditional: f64,
    pub stderr_rate_conditional: f64,
    /// Mean SU rate with outage trials contributing zero.
    pub mean_rate_zerofill: f64,
    pub stderr_rate_zerofill: f64,
    /// Mean Tr(Q_s)/P_C over feasible trials; NaN when none were feasible.
    pub mean_power_share: f64,
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

/// Fold trial records into one strategy's statistics. Numerical failures
/// are excluded from both the outage numerator and denominator: they are
/// artifact defects, not channel events.
pub fn aggregate(records: &[TrialRecord], strategy: Strategy) -> Result<AggregateStats, SimError> {
    let mut feasible_rates = Vec::new();
    let mut zerofill_rates = Vec::new();
    let mut shares = Vec::new();
    let mut n_outage = 0usize;
    let mut n_numfail = 0usize;
    for rec in records {
        let Some(out) = rec.outcomes.iter().find(|o| o.strategy == strategy) else {
            continue;
        };
        match out.status {
            TrialStatus::Feasible => {
                feasible_rates.push(out.su_rate);
                zerofill_rates.push(out.su_rate);
                shares.push(out.power_share);
            }
            TrialStatus::Outage => {
                n_outage += 1;
                zerofill_rates.push(0.0);
            }
            TrialStatus::NumericalFailure => n_numfail += 1,
        }
    }
    let n_trials = feasible_rates.len() + n_outage + n_numfail;
    let valid = n_trials - n_numfail;
    if n_trials > 0 && valid == 0 {
        return Err(SimError::AllTrialsFailed);
    }
    let outage_prob = if valid > 0 {
        n_outage as f64 / valid as f64
    } else {
        f64::NAN
    };
    let stderr_outage = if valid > 1 {
        (outage_prob * (1.0 - outage_prob) / valid as f64).sqrt()
    } else {
        f64::NAN
    };
    let (mean_c, se_c) = mean_and_stderr(&feasible_rates);
    let (mean_z, se_z) = mean_and_stderr(&zerofill_rates);
    let (share, _) = mean_and_stderr(&shares);
    Ok(AggregateStats {
        strategy,
        n_trials,
        n_feasible: feasible_rates.len(),
        n_outage,
        n_numfail,
        outage_prob,
        stderr_outage,
        mean_rate_conditional: mean_c,
        stderr_rate_conditional: se_c,
        mean_rate_zerofill: mean_z,
        stderr_rate_zerofill: se_z,
        mean_power_share: share,
    })
}

/// One row of a sweep: the swept value plus per-strategy aggregates, in
/// the order strategies sort by name.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub sweep_value: f64,
    pub stats: Vec<AggregateStats>,
    pub records: Vec<TrialRecord>,
}

/// Run all trials of one sweep point; trials execute in parallel but fold
/// deterministically in index order.
pub fn run_point(
    cfg: &SimConfig,
    axis: Option<(SweepAxis, f64)>,
) -> Result<Vec<TrialRecord>, SimError> {
    let setup = cfg.setup(axis)?;
    (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, &setup, t))
        .collect()
}

/// Sweep the configured grid of one axis.
pub fn run_sweep(cfg: &SimConfig, axis: SweepAxis) -> Result<Vec<SweepRow>, SimError> {
    let mut rows = Vec::new();
    for value in cfg.grid(axis) {
        let records = run_point(cfg, Some((axis, value)))?;
        let mut strategies = cfg.strategies.clone();
        strategies.sort_by_key(|s| s.name());
        let stats = strategies
            .iter()
            .map(|&s| aggregate(&records, s))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(SweepRow {
            sweep_value: value,
            stats,
            records,
        });
    }
    Ok(rows)
}

/// Fixed CSV header shared by every sweep artifact.
pub const CSV_HEADER: &str = "sweep_value,strategy,mean_su_rate_conditional,mean_su_rate_zerofill,outage_prob,mean_power_share,stderr_rate,n_trials,n_numfail";

/// Format with 12 significant digits, '.' decimal separator, `nan` for
/// undefined values; byte-stable across runs.
pub fn fmt_stat(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.11e}")
    }
}

/// Render sweep rows as the canonical CSV artifact, sorted by
/// (sweep_value, strategy).
pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        let mut stats: Vec<&AggregateStats> = row.stats.iter().collect();
        stats.sort_by_key(|s| s.strategy.name());
        for s in stats {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                fmt_stat(row.sweep_value),
                s.strategy.name(),
                fmt_stat(s.mean_rate_conditional),
                fmt_stat(s.mean_rate_zerofill),
                fmt_stat(s.outage_prob),
                fmt_stat(s.mean_power_share),
                fmt_stat(s.stderr_rate_zerofill),
                s.n_trials,
                s.n_numfail,
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> SimConfig {
        SimConfig {
            m: 2,
            trials: 4,
            k: 0.5,
            ..Default::default()
        }
    }

    #[test]
    fn trial_is_deterministic() {
        let cfg = tiny_cfg();
        let setup = cfg.setup(None).unwrap();
        let a = run_trial(&cfg, &setup, 3).unwrap();
        let b = run_trial(&cfg, &setup, 3).unwrap();
        assert_eq!(a.indicators, b.indicators);
        assert_eq!(a.outcomes.len(), b.outcomes.len());
        for (x, y) in a.outcomes.iter().zip(&b.outcomes) {
            assert_eq!(x.status, y.status);
            assert_eq!(x.su_rate.to_bits(), y.su_rate.to_bits());
            assert_eq!(x.power_share.to_bits(), y.power_share.to_bits());
        }
    }

    #[test]
    fn zero_demand_never_outages() {
        let cfg = SimConfig {
            m: 2,
            trials: 6,
            k: 1e-12,
            ..Default::default()
        };
        let records = run_point(&cfg, None).unwrap();
        for rec in &records {
            assert!(rec.mac_ok);
            for out in &rec.outcomes {
                assert_eq!(out.status, TrialStatus::Feasible);
                // With no primary demand the SU takes (almost) all power.
                assert!(out.power_share > 0.99, "share={}", out.power_share);
            }
        }
    }

    #[test]
    fn aggregate_arithmetic() {
        let mk = |status, rate: f64| StrategyOutcome {
            strategy: Strategy::Af,
            status,
            su_rate: rate,
            power_share: 0.5,
            path: None,
            iterations: 0,
        };
        let rec = |t, status, rate| TrialRecord {
            trial: t,
            indicators: DecodeIndicators { a_a: true, a_b: true },
            mac_ok: true,
            outcomes: vec![mk(status, rate)],
        };
        // 10 trials, 5 infeasible, feasible rates all 2.0.
        let mut records = Vec::new();
        for t in 0..5 {
            records.push(rec(t, TrialStatus::Feasible, 2.0));
        }
        for t in 5..10 {
            records.push(rec(t, TrialStatus::Outage, 0.0));
        }
        let s = aggregate(&records, Strategy::Af).unwrap();
        assert_eq!(s.n_trials, 10);
        assert!((s.mean_rate_conditional - 2.0).abs() < 1e-15);
        assert!((s.mean_rate_zerofill - 1.0).abs() < 1e-15);
        assert!((s.outage_prob - 0.5).abs() < 1e-15);

        // All feasible at rate 1.
        let records: Vec<_> = (0..10).map(|t| rec(t, TrialStatus::Feasible, 1.0)).collect();
        let s = aggregate(&records, Strategy::Af).unwrap();
        assert!((s.mean_rate_conditional - 1.0).abs() < 1e-15);
        assert_eq!(s.outage_prob, 0.0);

        // All outage: conditional mean is the NaN sentinel, outage 1.
        let records: Vec<_> = (0..4).map(|t| rec(t, TrialStatus::Outage, 0.0)).collect();
        let s = aggregate(&records, Strategy::Af).unwrap();
        assert!(s.mean_rate_conditional.is_nan());
        assert_eq!(s.outage_prob, 1.0);

        // All numerical failures is an error, not an outage.
        let records: Vec<_> = (0..4)
            .map(|t| rec(t, TrialStatus::NumericalFailure, 0.0))
            .collect();
        assert!(matches!(
            aggregate(&records, Strategy::Af),
            Err(SimError::AllTrialsFailed)
        ));
    }

    #[test]
    fn single_trial_sweep_row_matches_trial() {
        let cfg = SimConfig {
            m: 2,
            trials: 1,
            k: 0.5,
            pc_grid_db: vec![10.0],
            ..Default::default()
        };
        let rows = run_sweep(&cfg, SweepAxis::PcDb).unwrap();
        assert_eq!(rows.len(), 1);
        let setup = cfg.setup(Some((SweepAxis::PcDb, 10.0))).unwrap();
        let rec = run_trial(&cfg, &setup, 0).unwrap();
        for s in &rows[0].stats {
            let out = rec.outcomes.iter().find(|o| o.strategy == s.strategy).unwrap();
            match out.status {
                TrialStatus::Feasible => {
                    assert_eq!(s.mean_rate_conditional.to_bits(), out.su_rate.to_bits())
                }
                TrialStatus::Outage => assert_eq!(s.outage_prob, 1.0),
                TrialStatus::NumericalFailure => assert_eq!(s.n_numfail, 1),
            }
        }
    }

    #[test]
    fn csv_format_is_stable() {
        assert_eq!(fmt_stat(0.5), "5.00000000000e-1");
        assert_eq!(fmt_stat(f64::NAN), "nan");
        let cfg = SimConfig {
            m: 2,
            trials: 2,
            k: 0.5,
            pc_grid_db: vec![5.0, 10.0],
            ..Default::default()
        };
        let a = to_csv(&run_sweep(&cfg, SweepAxis::PcDb).unwrap());
        let b = to_csv(&run_sweep(&cfg, SweepAxis::PcDb).unwrap());
        assert_eq!(a, b);
        assert!(a.starts_with(CSV_HEADER));
        // Rows sorted by (sweep_value, strategy name).
        let lines: Vec<&str> = a.lines().collect();
        assert!(lines[1].contains(",af,"));
        assert!(lines[2].contains(",dfsup,"));
        assert!(lines[3].contains(",dfxor,"));
    }
}
