//! The `solve`, `fluct` and `simulate` commands.
//!
//! Each command has a pure part returning a report and a `cmd_*` wrapper
//! that writes the report into an output directory.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use lmmse_clt::detsolve::{solve_general, solve_separable, SolverOptions};
use lmmse_clt::fluctuations::{
    build_a_delta_g, clt_certificate, omega_squared, outage_sinr, theta_squared, CltCertificate,
};
use lmmse_clt::montecarlo::{
    empirical_stats, run_experiment, EmpiricalStats, ExperimentOptions, SinrSampleSet,
    StatsOptions, SymbolDistribution,
};
use lmmse_clt::profiles::{check_assumptions, AssumptionReport};
use serde::Serialize;

use crate::config::{ExperimentConfig, Point};

#[derive(Debug, Clone, Serialize)]
pub struct SolvePoint {
    #[serde(flatten)]
    pub point: Point,
    pub beta_bar: f64,
    pub t: Vec<f64>,
    pub t_tilde: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub assumptions: AssumptionReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub config_digest: String,
    pub seed: u64,
    pub points: Vec<SolvePoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FluctPoint {
    #[serde(flatten)]
    pub point: Point,
    pub beta_bar: f64,
    pub theta_sq: f64,
    pub quad_term: f64,
    pub kurtosis_term: f64,
    pub fourth_moment: f64,
    pub omega_sq: Option<f64>,
    pub certificate: CltCertificate,
    pub outage_level: f64,
    pub outage_theoretical: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FluctReport {
    pub config_digest: String,
    pub seed: u64,
    pub distribution: SymbolDistribution,
    pub points: Vec<FluctPoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    #[serde(flatten)]
    pub point: Point,
    pub n_trials: usize,
    pub beta_bar: f64,
    pub theta_sq: f64,
    pub mean: f64,
    pub variance: f64,
    pub mse_ratio: f64,
    pub ks_distance: f64,
    pub outage_level: f64,
    pub outage_empirical: f64,
    pub outage_theoretical: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub config_digest: String,
    pub seed: u64,
    pub distribution: SymbolDistribution,
    pub rows: Vec<SummaryRow>,
    #[serde(skip)]
    pub sets: Vec<SinrSampleSet>,
    #[serde(skip)]
    pub stats: Vec<EmpiricalStats>,
}

pub fn solve(cfg: &ExperimentConfig) -> Result<SolveReport> {
    let m4 = cfg.symbol_distribution().fourth_moment();
    let points = cfg
        .resolve()?
        .into_iter()
        .map(|(point, prof)| {
            let det = solve_general(&prof.profile, point.rho, &SolverOptions::default())
                .with_context(|| format!("solving point {}", point.label))?;
            Ok(SolvePoint {
                assumptions: check_assumptions(&prof.profile, m4),
                beta_bar: det.beta_bar,
                t: det.t,
                t_tilde: det.t_tilde,
                residual: det.residual,
                iterations: det.iterations,
                point,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SolveReport {
        config_digest: cfg.digest(),
        seed: cfg.seed,
        points,
    })
}

pub fn fluct(cfg: &ExperimentConfig) -> Result<FluctReport> {
    let dist = cfg.symbol_distribution();
    let m4 = dist.fourth_moment();
    let points = cfg
        .resolve()?
        .into_iter()
        .map(|(point, prof)| {
            let ctx = || format!("point {}", point.label);
            let det = solve_general(&prof.profile, point.rho, &SolverOptions::default())
                .with_context(ctx)?;
            let params = theta_squared(&prof.profile, &det, m4).with_context(ctx)?;
            let sys = build_a_delta_g(&prof.profile, &det).with_context(ctx)?;
            let certificate = clt_certificate(&sys.a).with_context(ctx)?;
            if !certificate.holds() {
                bail!(
                    "point {}: structural certificate on (I - A)^-1 failed: {certificate:?}",
                    point.label
                );
            }
            let omega_sq = match &prof.separable {
                Some(sep) => {
                    let eq = solve_separable(sep, point.rho, &SolverOptions::default())
                        .with_context(ctx)?;
                    Some(omega_squared(&eq, m4).with_context(ctx)?)
                }
                None => None,
            };
            let outage_theoretical = outage_sinr(
                det.beta_bar,
                params.theta_sq,
                point.n_users,
                cfg.outage_level,
            )
            .with_context(ctx)?;
            Ok(FluctPoint {
                beta_bar: det.beta_bar,
                theta_sq: params.theta_sq,
                quad_term: params.quad_term,
                kurtosis_term: params.kurtosis_term,
                fourth_moment: m4,
                omega_sq,
                certificate,
                outage_level: cfg.outage_level,
                outage_theoretical,
                point,
            })
        })
        .collect::<Result<_>>()?;
    Ok(FluctReport {
        config_digest: cfg.digest(),
        seed: cfg.seed,
        distribution: dist,
        points,
    })
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<SimulateReport> {
    let dist = cfg.symbol_distribution();
    let opts = ExperimentOptions {
        n_trials: cfg.n_trials(),
        seed: cfg.seed,
        workers: cfg.workers(),
        solver: SolverOptions::default(),
    };
    let mut levels = vec![cfg.outage_level, 0.05, 0.5];
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let stats_opts = StatsOptions {
        quantile_levels: levels,
        hist_bins: cfg.hist_bins,
        ..Default::default()
    };

    let resolved = cfg.resolve()?;
    let total = resolved.len();
    let (mut rows, mut sets, mut stats) = (vec![], vec![], vec![]);
    for (i, (point, prof)) in resolved.into_iter().enumerate() {
        eprintln!(
            "[{}/{total}] {}: N = {}, K = {}, {} trials",
            i + 1,
            point.label,
            point.n_rx,
            point.n_users,
            opts.n_trials
        );
        let ctx = || format!("point {}", point.label);
        let set = run_experiment(&prof.profile, point.rho, dist, &opts).with_context(ctx)?;
        let st = empirical_stats(&set, &stats_opts).with_context(ctx)?;
        let row = SummaryRow {
            n_trials: set.len(),
            beta_bar: set.beta_bar,
            theta_sq: set.theta_sq,
            mean: st.mean,
            variance: st.variance,
            mse_ratio: st.mse_ratio,
            ks_distance: st.ks_distance,
            outage_level: cfg.outage_level,
            outage_empirical: st.quantile(cfg.outage_level).expect("level requested"),
            outage_theoretical: outage_sinr(
                set.beta_bar,
                set.theta_sq,
                point.n_users,
                cfg.outage_level,
            )
            .with_context(ctx)?,
            point,
        };
        let numbers = [
            row.beta_bar,
            row.theta_sq,
            row.mean,
            row.variance,
            row.mse_ratio,
            row.ks_distance,
            row.outage_empirical,
            row.outage_theoretical,
        ];
        if numbers.iter().any(|v| !v.is_finite()) {
            bail!("point {}: non-finite summary value", row.point.label);
        }
        rows.push(row);
        sets.push(set);
        stats.push(st);
    }
    Ok(SimulateReport {
        config_digest: cfg.digest(),
        seed: cfg.seed,
        distribution: dist,
        rows,
        sets,
        stats,
    })
}

/// Writes `contents` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    std::fs::write(&tmp, contents).with_context(|| format!("cannot write {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("cannot move into {}", path.display()))
}

fn prepare(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn csv_preamble(seed: u64, digest: &str) -> String {
    format!("# seed={seed} config_digest={digest}\n")
}

pub fn cmd_solve(cfg: &ExperimentConfig, out: &Path) -> Result<SolveReport> {
    let report = solve(cfg)?;
    prepare(out)?;
    write_atomic(&out.join("solve.json"), &to_json(&report)?)?;
    Ok(report)
}

pub fn cmd_fluct(cfg: &ExperimentConfig, out: &Path) -> Result<FluctReport> {
    let report = fluct(cfg)?;
    prepare(out)?;
    write_atomic(&out.join("fluct.json"), &to_json(&report)?)?;
    Ok(report)
}

pub fn summary_csv(report: &SimulateReport) -> String {
    let mut s = csv_preamble(report.seed, &report.config_digest);
    s.push_str(
        "label,n_rx,n_users,snr_db,rho,n_trials,beta_bar,theta_sq,mean,variance,mse_ratio,ks_distance,outage_level,outage_empirical,outage_theoretical\n",
    );
    for r in &report.rows {
        let p = &r.point;
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            p.label,
            p.n_rx,
            p.n_users,
            p.snr_db,
            p.rho,
            r.n_trials,
            r.beta_bar,
            r.theta_sq,
            r.mean,
            r.variance,
            r.mse_ratio,
            r.ks_distance,
            r.outage_level,
            r.outage_empirical,
            r.outage_theoretical
        )
        .expect("write to string");
    }
    s
}

pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<SimulateReport> {
    let report = simulate(cfg)?;
    prepare(out)?;
    let pre = csv_preamble(report.seed, &report.config_digest);
    for ((row, set), st) in report.rows.iter().zip(&report.sets).zip(&report.stats) {
        let label = &row.point.label;
        write_atomic(
            &out.join(format!("samples_{label}.csv")),
            &set.to_csv(&report.config_digest),
        )?;
        write_atomic(
            &out.join(format!("histogram_{label}.csv")),
            &format!("{pre}{}", st.histogram.to_csv()),
        )?;
        write_atomic(
            &out.join(format!("qq_{label}.csv")),
            &format!("{pre}{}", st.qq_csv()),
        )?;
    }
    write_atomic(&out.join("summary.json"), &to_json(&report)?)?;
    write_atomic(&out.join("summary.csv"), &summary_csv(&report))?;
    Ok(report)
}
