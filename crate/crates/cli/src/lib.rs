//! Subcommand implementations behind the `geoaudit` binary. Each command
//! returns the bytes it would write so that callers and tests can compare
//! outputs directly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use geoaudit::ambiguity::{
    percentile, write_jsonl, write_profiles_csv, AmbiguityConfig, AmbiguityError, Auditor, CalibrationStats, Decision,
    GeometryProfile, DEFAULT_EPSILON, DEFAULT_PERCENTILE,
};
use geoaudit::bounds::{bound_params_from_rows, confidence_lower_bound, confidence_upper_bound, delta_for_confidence};
use geoaudit::bundle::{load_bundle_as, BundleError, Dtype};
use geoaudit::detector::{
    assemble_features, evaluate, train_detector, DetectorModel, FeatureTable, DEFAULT_CAP, DEFAULT_LAMBDA,
};
use geoaudit::hull::{TrainingGeometry, DEFAULT_EPS_BAR};
use geoaudit::region::{region_report, RegionConfig, DEFAULT_SAMPLES};
use geoaudit::space::{decompose, empirical_phi_bound};
use geoaudit::ModelBundle;

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_COMPUTE: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Compute(_) => EXIT_COMPUTE,
        }
    }
}

impl From<BundleError> for CliError {
    fn from(e: BundleError) -> Self {
        CliError::Input(format!("bundle: {e}"))
    }
}

fn compute(e: impl std::fmt::Display) -> CliError {
    CliError::Compute(e.to_string())
}

fn ambiguity_error(e: AmbiguityError) -> CliError {
    match e {
        AmbiguityError::InvalidConfig(_) | AmbiguityError::InvalidPercentile(_) | AmbiguityError::UnlabeledTraining => {
            CliError::Input(e.to_string())
        }
        other => compute(other),
    }
}

pub fn load(path: &Path, dtype: Option<Dtype>) -> Result<ModelBundle, CliError> {
    Ok(load_bundle_as(path, dtype)?)
}

/// Defaults that may be supplied by a JSON file; command-line flags win.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub epsilon: Option<f64>,
    pub alpha: Option<f64>,
    pub eps_bar: Option<f64>,
    pub tau: Option<f64>,
    pub percentile: Option<f64>,
    pub tau_conf: Option<f64>,
    pub delta_h: Option<f64>,
    pub mc_samples: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub dtype: Option<Dtype>,
    pub lambda: Option<f64>,
}

impl FileConfig {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Input(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Jsonl,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreOptions {
    pub epsilon: f64,
    pub alpha: f64,
    pub eps_bar: f64,
    pub tau: Option<f64>,
    pub percentile: Option<f64>,
    pub format: Format,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            alpha: 1.0,
            eps_bar: DEFAULT_EPS_BAR,
            tau: None,
            percentile: None,
            format: Format::Jsonl,
        }
    }
}

impl ScoreOptions {
    fn config(&self) -> AmbiguityConfig {
        AmbiguityConfig {
            epsilon: self.epsilon,
            alpha: self.alpha,
            eps_bar: self.eps_bar,
            tau: self.tau,
            ..Default::default()
        }
    }
}

fn auditor(bundle: &ModelBundle, opts: &ScoreOptions) -> Result<Auditor, CliError> {
    let cfg = opts.config();
    cfg.validate().map_err(ambiguity_error)?;
    Auditor::from_bundle(bundle, cfg).map_err(ambiguity_error)
}

/// Fixes τ and the percentile population: an explicit τ wins, otherwise
/// the requested (or default) percentile of the leave-one-out training
/// scores.
fn calibrate(aud: &mut Auditor, opts: &ScoreOptions, need_tau: bool) -> Result<(), CliError> {
    if opts.tau.is_none() && opts.percentile.is_none() && !need_tau {
        return Ok(());
    }
    let train = aud.training_profiles().map_err(ambiguity_error)?;
    aud.set_stats(CalibrationStats::from_profiles(&train).map_err(ambiguity_error)?);
    let tau = match opts.tau {
        Some(t) => t,
        None => {
            let scores: Vec<f64> = train.iter().map(|p| p.zeta).collect();
            percentile(&scores, opts.percentile.unwrap_or(DEFAULT_PERCENTILE)).map_err(ambiguity_error)?
        }
    };
    aud.set_tau(tau);
    Ok(())
}

fn eval_profiles(aud: &Auditor, bundle: &ModelBundle) -> Result<Vec<GeometryProfile>, CliError> {
    let eval = bundle
        .eval
        .as_ref()
        .ok_or_else(|| CliError::Input("bundle has no evaluation set".into()))?;
    aud.profile_set(eval, "eval").map_err(ambiguity_error)
}

/// Geometry profile of every evaluation sample.
pub fn cmd_score(bundle: &ModelBundle, opts: &ScoreOptions) -> Result<Vec<u8>, CliError> {
    if bundle.eval.is_none() {
        return Err(CliError::Input("bundle has no evaluation set".into()));
    }
    let mut aud = auditor(bundle, opts)?;
    calibrate(&mut aud, opts, false)?;
    let profiles = eval_profiles(&aud, bundle)?;
    let mut out = Vec::new();
    match opts.format {
        Format::Jsonl => write_jsonl(&profiles, &mut out),
        Format::Csv => write_profiles_csv(&profiles, &mut out),
    }
    .map_err(compute)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateRecord {
    pub id: String,
    #[serde(with = "geoaudit::ambiguity::finite_json")]
    pub tau: f64,
    #[serde(flatten)]
    pub decision: Decision,
}

/// Classify-or-abstain decision per evaluation sample; abstentions carry an
/// explanation.
pub fn cmd_gate(bundle: &ModelBundle, opts: &ScoreOptions) -> Result<Vec<u8>, CliError> {
    if bundle.eval.is_none() {
        return Err(CliError::Input("bundle has no evaluation set".into()));
    }
    let mut aud = auditor(bundle, opts)?;
    calibrate(&mut aud, opts, true)?;
    let tau = aud.config().tau.expect("calibrated");
    let profiles = eval_profiles(&aud, bundle)?;
    let records: Vec<GateRecord> = profiles
        .iter()
        .map(|p| {
            let mut decision = geoaudit::ambiguity::decide(p.class, p.zeta, tau);
            if let Decision::Abstain { explanation, .. } = &mut decision {
                *explanation = aud.explain(p).ok();
            }
            GateRecord {
                id: p.id.clone(),
                tau,
                decision,
            }
        })
        .collect();
    let mut out = Vec::new();
    write_jsonl(&records, &mut out).map_err(compute)?;
    Ok(out)
}

pub const BOUNDS_TAUS: [f64; 8] = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.98, 0.99];
const CURVE_POINTS: usize = 50;

pub struct BoundsOutput {
    pub report: String,
    pub curves_csv: String,
}

/// `ρ`, `ρ′`, the boundary distance needed per confidence level, and the
/// two confidence bounds as functions of the boundary distance.
pub fn cmd_bounds(bundle: &ModelBundle) -> Result<BoundsOutput, CliError> {
    let p = bound_params_from_rows(&bundle.head.weights).map_err(compute)?;
    if p.is_degenerate() {
        return Err(CliError::Compute(
            "rho(W) = 0: two classes have identical weight rows, no confidence guarantee".into(),
        ));
    }
    let mut report = format!("n = {}\nrho = {:.6}\nrho_prime = {:.6}\n\ntau\tdelta\n", p.n, p.rho, p.rho_prime);
    let mut dmax: f64 = 0.0;
    for tau in BOUNDS_TAUS {
        match delta_for_confidence(tau, p.rho, p.n) {
            Ok(d) => {
                dmax = dmax.max(d);
                report.push_str(&format!("{tau}\t{d:.6}\n"));
            }
            Err(_) => report.push_str(&format!("{tau}\tn/a\n")),
        }
    }
    let dmax = if dmax > 0.0 { dmax } else { 1.0 / p.rho };
    let mut curves_csv = String::from("delta,lower,upper\n");
    for k in 0..=CURVE_POINTS {
        let d = dmax * k as f64 / CURVE_POINTS as f64;
        curves_csv.push_str(&format!(
            "{d},{},{}\n",
            confidence_lower_bound(d, p.rho, p.n),
            confidence_upper_bound(d, p.rho_prime)
        ));
    }
    Ok(BoundsOutput { report, curves_csv })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionOptions {
    pub tau_conf: f64,
    pub delta_h: f64,
    pub mc_samples: usize,
    pub seed: u64,
    pub enumerate_vertices: bool,
}

impl Default for RegionOptions {
    fn default() -> Self {
        Self {
            tau_conf: 0.9,
            delta_h: 0.0,
            mc_samples: DEFAULT_SAMPLES,
            seed: 0,
            enumerate_vertices: true,
        }
    }
}

/// Region report as pretty JSON.
pub fn cmd_regions(bundle: &ModelBundle, opts: &RegionOptions) -> Result<Vec<u8>, CliError> {
    let bound = match bundle.phi_l2_bound {
        Some(b) => b,
        None => empirical_phi_bound(std::iter::once(&bundle.train).chain(bundle.eval.as_ref())).map_err(compute)?,
    };
    let space = decompose(&bundle.head).and_then(|s| s.set_domain_bound(bound)).map_err(compute)?;
    let geom = TrainingGeometry::from_space(&space, &bundle.train).map_err(compute)?;
    let cfg = RegionConfig {
        tau: opts.tau_conf,
        delta_h: opts.delta_h,
        n_samples: opts.mc_samples,
        seed: opts.seed,
        enumerate_vertices: opts.enumerate_vertices,
    };
    let report = region_report(&space, Some(&geom), &cfg).map_err(|e| match e {
        geoaudit::region::RegionError::Bounds(b) => CliError::Input(b.to_string()),
        geoaudit::region::RegionError::TooFewSamples(_) => CliError::Input(e.to_string()),
        other => compute(other),
    })?;
    let mut out = serde_json::to_vec_pretty(&report).map_err(compute)?;
    out.push(b'\n');
    Ok(out)
}

fn read_profiles(path: &Path) -> Result<Vec<GeometryProfile>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    geoaudit::ambiguity::read_profiles_jsonl(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn tables(positive: &Path, negative: &Path) -> Result<(FeatureTable, FeatureTable), CliError> {
    let p = assemble_features(&read_profiles(positive)?, DEFAULT_CAP);
    let n = assemble_features(&read_profiles(negative)?, DEFAULT_CAP);
    Ok((p, n))
}

/// Fits a detector on two profile files (undesirable, normal).
pub fn cmd_detector_train(positive: &Path, negative: &Path, lambda: Option<f64>) -> Result<Vec<u8>, CliError> {
    let (p, n) = tables(positive, negative)?;
    let model = train_detector(&p, &n, lambda.unwrap_or(DEFAULT_LAMBDA)).map_err(|e| CliError::Input(e.to_string()))?;
    let mut out = serde_json::to_vec_pretty(&model).map_err(compute)?;
    out.push(b'\n');
    Ok(out)
}

/// Metrics of a saved detector on two profile files.
pub fn cmd_detector_eval(model: &Path, positive: &Path, negative: &Path) -> Result<Vec<u8>, CliError> {
    let text = std::fs::read_to_string(model).map_err(|e| CliError::Input(format!("{}: {e}", model.display())))?;
    let model: DetectorModel =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", "model")))?;
    let (p, n) = tables(positive, negative)?;
    let table = FeatureTable::labeled(&p, &n).map_err(|e| CliError::Input(e.to_string()))?;
    let m = evaluate(&model, &table).map_err(|e| CliError::Input(e.to_string()))?;
    let mut out = serde_json::to_vec_pretty(&m).map_err(compute)?;
    out.push(b'\n');
    Ok(out)
}
