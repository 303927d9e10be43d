//! Experiment configuration: a flat TOML document.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lmmse_clt::montecarlo::{trial_rng, SymbolDistribution};
use lmmse_clt::profiles::{
    build_iid_profile, build_mccdma_downlink, build_mccdma_uplink, build_mimo_kronecker,
    build_power_classes, exponential_correlation_eigenvalues, SeparableProfile, VarianceProfile,
};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Iid,
    MimoExp,
    MccdmaUplink,
    MccdmaDownlink,
    /// Variance profile read from a JSON file.
    File,
}

/// How `N` follows from `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KRule {
    /// `n_rx` and `n_users` are both given.
    #[default]
    Explicit,
    /// `N = 2K`.
    HalfN,
    /// `N = K`.
    Square,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distribution {
    Gaussian,
    Qpsk,
}

impl From<Distribution> for SymbolDistribution {
    fn from(d: Distribution) -> Self {
        match d {
            Distribution::Gaussian => SymbolDistribution::ComplexGaussian,
            Distribution::Qpsk => SymbolDistribution::UnitModulusQpsk,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PowerMode {
    /// Interferers drawn from the five power classes.
    #[default]
    Classes,
    /// Every interferer at `base_power`.
    Equal,
    /// Interferer powers taken from `interferer_powers`.
    List,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sweep {
    #[default]
    None,
    K,
    Snr,
}

fn default_base_power() -> f64 {
    1.0
}
fn default_taps() -> usize {
    5
}
fn default_correlation() -> f64 {
    0.1
}
fn default_outage_level() -> f64 {
    0.01
}
fn default_hist_bins() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Model,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_rx: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_users: Option<usize>,
    #[serde(default)]
    pub k_rule: KRule,
    pub snr_db: f64,
    /// Power of the user of interest; `rho = base_power * 10^(-snr_db / 10)`.
    #[serde(default = "default_base_power")]
    pub base_power: f64,
    pub distribution: Distribution,
    pub n_trials: i64,
    #[serde(default)]
    pub seed: u64,
    /// Not part of the digest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Channel taps per user (MC-CDMA).
    #[serde(default = "default_taps")]
    pub taps: usize,
    /// Receive correlation coefficient (MIMO).
    #[serde(default = "default_correlation")]
    pub correlation: f64,
    #[serde(default)]
    pub powers: PowerMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interferer_powers: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile_path: Option<PathBuf>,
    #[serde(default)]
    pub sweep: Sweep,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_values: Option<Vec<f64>>,
    #[serde(default = "default_outage_level")]
    pub outage_level: f64,
    #[serde(default = "default_hist_bins")]
    pub hist_bins: usize,
    /// Not part of the digest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

/// One resolved `(N, K, rho)` point of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Point {
    pub label: String,
    pub n_rx: usize,
    pub n_users: usize,
    pub snr_db: f64,
    pub rho: f64,
}

/// A materialized profile, with its factors when the model is separable.
#[derive(Debug, Clone)]
pub struct ResolvedProfile {
    pub profile: VarianceProfile,
    pub separable: Option<SeparableProfile>,
}

impl ResolvedProfile {
    /// Keeps the product form when the profile happens to have one.
    fn factored(profile: VarianceProfile) -> Self {
        Self {
            separable: profile.factor_separable(1e-12),
            profile,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).context("cannot parse config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::from_toml_str(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials < 1 {
            bail!("field `n_trials` must be at least 1, got {}", self.n_trials);
        }
        if !self.snr_db.is_finite() {
            bail!("field `snr_db` must be finite");
        }
        if !(self.base_power > 0.0 && self.base_power.is_finite()) {
            bail!(
                "field `base_power` must be positive, got {}",
                self.base_power
            );
        }
        if self.workers == Some(0) {
            bail!("field `workers` must be at least 1");
        }
        if !(self.outage_level > 0.0 && self.outage_level < 1.0) {
            bail!(
                "field `outage_level` must lie in (0, 1), got {}",
                self.outage_level
            );
        }
        if self.hist_bins == 0 {
            bail!("field `hist_bins` must be at least 1");
        }
        match self.model {
            Model::MccdmaUplink | Model::MccdmaDownlink if self.taps == 0 => {
                bail!("field `taps` must be at least 1")
            }
            Model::MimoExp if !(self.correlation > 0.0 && self.correlation < 1.0) => {
                bail!(
                    "field `correlation` must lie in (0, 1), got {}",
                    self.correlation
                )
            }
            Model::File if self.profile_path.is_none() => {
                bail!("field `profile_path` is required for model = \"file\"")
            }
            _ => {}
        }
        if self.model == Model::File && self.sweep == Sweep::K {
            bail!("field `sweep` cannot be \"k\" for model = \"file\"");
        }
        if self.powers == PowerMode::List {
            match &self.interferer_powers {
                None => bail!("field `interferer_powers` is required for powers = \"list\""),
                Some(p) if p.iter().any(|v| !(*v > 0.0 && v.is_finite())) => {
                    bail!("field `interferer_powers` must hold positive values")
                }
                _ => {}
            }
        }
        match (self.sweep, &self.sweep_values) {
            (Sweep::None, Some(_)) => {
                bail!("field `sweep_values` needs `sweep` to be \"k\" or \"snr\"")
            }
            (Sweep::K | Sweep::Snr, None) => {
                bail!("field `sweep_values` is required when sweeping")
            }
            (Sweep::K | Sweep::Snr, Some(v)) if v.is_empty() => {
                bail!("field `sweep_values` must not be empty")
            }
            (Sweep::K, Some(v)) if v.iter().any(|x| !(*x >= 1.0 && x.fract() == 0.0)) => {
                bail!("field `sweep_values` must hold positive integers when sweeping K")
            }
            (Sweep::Snr, Some(v)) if v.iter().any(|x| !x.is_finite()) => {
                bail!("field `sweep_values` must be finite")
            }
            _ => {}
        }
        if self.model != Model::File {
            for p in self.points()? {
                if p.n_rx == 0 || p.n_users == 0 {
                    bail!(
                        "resolved n_rx = {} and n_users = {} must both be positive",
                        p.n_rx,
                        p.n_users
                    );
                }
            }
        }
        Ok(())
    }

    pub fn n_trials(&self) -> u64 {
        self.n_trials.max(1) as u64
    }

    pub fn workers(&self) -> usize {
        self.workers.unwrap_or(1)
    }

    pub fn symbol_distribution(&self) -> SymbolDistribution {
        self.distribution.into()
    }

    /// SHA-256 of the effective config with `workers` and `out_dir` removed.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.workers = None;
        c.out_dir = None;
        let text = toml::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    fn rho(&self, snr_db: f64) -> f64 {
        self.base_power * 10f64.powf(-snr_db / 10.0)
    }

    fn dims(&self, k: Option<usize>) -> Result<(usize, usize)> {
        let k = k.or(self.n_users);
        Ok(match self.k_rule {
            KRule::Explicit => match (self.n_rx, k) {
                (Some(n), Some(k)) => (n, k),
                _ => bail!("fields `n_rx` and `n_users` are required when k_rule = \"explicit\""),
            },
            KRule::HalfN => match (self.n_rx, k) {
                (_, Some(k)) => (2 * k, k),
                (Some(n), None) => (n, n / 2),
                (None, None) => bail!("field `n_users` or `n_rx` is required"),
            },
            KRule::Square => match (self.n_rx, k) {
                (_, Some(k)) => (k, k),
                (Some(n), None) => (n, n),
                (None, None) => bail!("field `n_users` or `n_rx` is required"),
            },
        })
    }

    /// Experiment points, sorted by the sweep variable.
    pub fn points(&self) -> Result<Vec<Point>> {
        let mut values = self.sweep_values.clone().unwrap_or_default();
        values.sort_by(f64::total_cmp);
        values.dedup();
        match self.sweep {
            Sweep::None => {
                let (n_rx, n_users) = self.dims(None)?;
                Ok(vec![Point {
                    label: "point".into(),
                    n_rx,
                    n_users,
                    snr_db: self.snr_db,
                    rho: self.rho(self.snr_db),
                }])
            }
            Sweep::K => values
                .iter()
                .map(|&k| {
                    let (n_rx, n_users) = self.dims(Some(k as usize))?;
                    Ok(Point {
                        label: format!("k{n_users}"),
                        n_rx,
                        n_users,
                        snr_db: self.snr_db,
                        rho: self.rho(self.snr_db),
                    })
                })
                .collect(),
            Sweep::Snr => {
                let (n_rx, n_users) = self.dims(None)?;
                Ok(values
                    .iter()
                    .map(|&s| Point {
                        label: format!("snr{s}"),
                        n_rx,
                        n_users,
                        snr_db: s,
                        rho: self.rho(s),
                    })
                    .collect())
            }
        }
    }

    /// Full power vector `[p_0, .., p_K]`.
    fn powers(&self, n_users: usize) -> Result<Vec<f64>> {
        let interferers = match self.powers {
            PowerMode::Classes => {
                build_power_classes(self.base_power, n_users, self.profile_seed())?
            }
            PowerMode::Equal => vec![self.base_power; n_users],
            PowerMode::List => {
                let list = self.interferer_powers.clone().unwrap_or_default();
                if list.len() != n_users {
                    bail!(
                        "field `interferer_powers` has {} entries but K = {n_users}",
                        list.len()
                    );
                }
                list
            }
        };
        let mut all = Vec::with_capacity(n_users + 1);
        all.push(self.base_power);
        all.extend(interferers);
        Ok(all)
    }

    fn profile_seed(&self) -> u64 {
        self.seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(1)
    }

    /// `count` tap vectors of `L` i.i.d. `CN(0, 1/L)` taps.
    fn draw_taps(&self, count: usize) -> Vec<Vec<Complex64>> {
        let mut rng = trial_rng(self.profile_seed(), u64::MAX);
        let scale = (0.5 / self.taps as f64).sqrt();
        (0..count)
            .map(|_| {
                (0..self.taps)
                    .map(|_| {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        Complex64::new(re, im) * scale
                    })
                    .collect()
            })
            .collect()
    }

    /// Builds the variance profile for `point`.
    ///
    /// Random ingredients (taps, power order) come from streams derived from
    /// `seed` that the Monte Carlo trials never use.
    pub fn build_profile(&self, point: &Point) -> Result<ResolvedProfile> {
        let (n, k) = (point.n_rx, point.n_users);
        let resolved = match self.model {
            Model::Iid => ResolvedProfile::factored(build_iid_profile(n, k)?),
            Model::MimoExp => {
                let lambda = exponential_correlation_eigenvalues(n, self.correlation)?;
                let sep = build_mimo_kronecker(&lambda, &self.powers(k)?)?;
                ResolvedProfile {
                    profile: sep.to_variance_profile(),
                    separable: Some(sep),
                }
            }
            Model::MccdmaUplink => {
                let taps = self.draw_taps(k + 1);
                ResolvedProfile::factored(build_mccdma_uplink(&taps, &self.powers(k)?, n)?)
            }
            Model::MccdmaDownlink => {
                let taps = self.draw_taps(1);
                let sep = build_mccdma_downlink(&taps[0], &self.powers(k)?, n)?;
                ResolvedProfile {
                    profile: sep.to_variance_profile(),
                    separable: Some(sep),
                }
            }
            Model::File => {
                let path = self.profile_path.as_ref().expect("validated");
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read profile {}", path.display()))?;
                let profile = VarianceProfile::from_json(&text)
                    .with_context(|| format!("invalid profile {}", path.display()))?;
                ResolvedProfile::factored(profile)
            }
        };
        Ok(resolved)
    }

    /// Points with the file model take their dimensions from the profile.
    pub fn resolve(&self) -> Result<Vec<(Point, ResolvedProfile)>> {
        if self.model == Model::File {
            let stub = Point {
                label: String::new(),
                n_rx: 0,
                n_users: 0,
                snr_db: self.snr_db,
                rho: self.rho(self.snr_db),
            };
            let prof = self.build_profile(&stub)?;
            let (n_rx, n_users) = (prof.profile.n_rx(), prof.profile.n_users());
            let snrs = match self.sweep {
                Sweep::Snr => {
                    let mut v = self.sweep_values.clone().unwrap_or_default();
                    v.sort_by(f64::total_cmp);
                    v.dedup();
                    v
                }
                _ => vec![self.snr_db],
            };
            return Ok(snrs
                .into_iter()
                .map(|s| {
                    let label = if self.sweep == Sweep::Snr {
                        format!("snr{s}")
                    } else {
                        "point".into()
                    };
                    let p = Point {
                        label,
                        n_rx,
                        n_users,
                        snr_db: s,
                        rho: self.rho(s),
                    };
                    (p, prof.clone())
                })
                .collect());
        }
        self.points()?
            .into_iter()
            .map(|p| {
                let prof = self.build_profile(&p)?;
                Ok((p, prof))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
model = "iid"
n_rx = 8
n_users = 8
snr_db = 0.0
distribution = "gaussian"
n_trials = 100
"#;

    #[test]
    fn minimal_config_resolves() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let pts = cfg.points().unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!((pts[0].n_rx, pts[0].n_users), (8, 8));
        assert_eq!(pts[0].rho, 1.0);
        assert_eq!(cfg.taps, 5);
        assert_eq!(cfg.outage_level, 0.01);
    }

    #[test]
    fn round_trip_is_lossless() {
        let mut cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        cfg.sweep = Sweep::Snr;
        cfg.sweep_values = Some(vec![0.0, 5.0, 0.1 + 0.2]);
        cfg.interferer_powers = Some(vec![1.0 / 3.0; 8]);
        cfg.workers = Some(4);
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.digest(), cfg.digest());
    }

    #[test]
    fn digest_ignores_workers_and_out_dir() {
        let a = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let mut b = a.clone();
        b.workers = Some(8);
        b.out_dir = Some("elsewhere".into());
        assert_eq!(a.digest(), b.digest());
        b.seed = 1;
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn rejects_bad_fields() {
        let neg = MINIMAL.replace("n_trials = 100", "n_trials = -5");
        let err = format!("{:#}", ExperimentConfig::from_toml_str(&neg).unwrap_err());
        assert!(err.contains("n_trials"), "{err}");
        let zero = MINIMAL.replace("n_trials = 100", "n_trials = 0");
        assert!(ExperimentConfig::from_toml_str(&zero).is_err());
        let unknown = format!("{MINIMAL}\nbogus = 1\n");
        let err = format!(
            "{:#}",
            ExperimentConfig::from_toml_str(&unknown).unwrap_err()
        );
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn half_n_rule_and_sorted_sweep() {
        let text = r#"
model = "mccdma-uplink"
k_rule = "half-n"
snr_db = 10.0
distribution = "gaussian"
n_trials = 10
sweep = "k"
sweep_values = [32, 8, 16]
"#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        let pts = cfg.points().unwrap();
        let dims: Vec<_> = pts.iter().map(|p| (p.n_rx, p.n_users)).collect();
        assert_eq!(dims, vec![(16, 8), (32, 16), (64, 32)]);
        assert!((pts[0].rho - 0.1).abs() < 1e-15);
        let prof = cfg.build_profile(&pts[0]).unwrap().profile;
        let p0: f64 = prof.column(0).sum::<f64>() / 16.0;
        assert!((p0 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn profiles_are_reproducible() {
        let text = r#"
model = "mccdma-downlink"
n_users = 4
k_rule = "half-n"
snr_db = 10.0
distribution = "qpsk"
n_trials = 10
seed = 9
"#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        let p = &cfg.points().unwrap()[0];
        let a = cfg.build_profile(p).unwrap();
        let b = cfg.build_profile(p).unwrap();
        assert_eq!(a.profile, b.profile);
        assert!(a.separable.is_some());
    }

    #[test]
    fn list_powers_must_match_k() {
        let text = r#"
model = "mimo-exp"
n_rx = 8
n_users = 2
snr_db = 10.0
distribution = "gaussian"
n_trials = 10
powers = "list"
interferer_powers = [4.0, 5.0]
"#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        let p = &cfg.points().unwrap()[0];
        let sep = cfg.build_profile(p).unwrap().separable.unwrap();
        assert_eq!(sep.d_tilde(), &[1.0, 4.0, 5.0]);
        let bad = text.replace("[4.0, 5.0]", "[4.0]");
        let cfg = ExperimentConfig::from_toml_str(&bad).unwrap();
        assert!(cfg.build_profile(&cfg.points().unwrap()[0]).is_err());
    }
}
