//! Experiment configuration: TOML sections in laboratory units (MHz and
//! microseconds) resolved into the library's angular units (rad/µs), with a
//! line-numbered validation report produced before any computation starts.

use serde::Deserialize;
use std::path::Path;

use rabiq::dynamics::{DecoherenceRates, RecordSpec};
use rabiq::model::{DriveParams, QuenchSchedule};
use rabiq::tomography::{FitConfig, RotationCorrection};

const TWO_PI: f64 = std::f64::consts::TAU;

// ---------------------------------------------------------------------------
// Raw (on-disk) schema
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub simulation: Option<RawSimulation>,
    pub schedule: Option<RawSchedule>,
    pub dissipation: Option<RawDissipation>,
    pub record: Option<RawRecord>,
    pub drive: Option<RawDrive>,
    pub tomography: Option<RawTomography>,
    pub calibration: Option<RawCalibration>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSimulation {
    /// "effective" (two-level quench model), "lab-two-level", or
    /// "lab-three-level" (drive-level Hamiltonian with 2 or 3 qubit levels).
    pub model: Option<String>,
    pub cutoff: Option<usize>,
    /// Scales the resolved integrator step down (0 < factor ≤ 1).
    pub substep_factor: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSchedule {
    pub xi_initial: f64,
    pub xi_final: f64,
    pub duration_us: f64,
    pub omega_delta_ratio: f64,
    pub eta_mhz: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDissipation {
    pub kappa_per_us: Option<f64>,
    pub gamma1_per_us: Option<f64>,
    pub gamma_phi_per_us: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRecord {
    pub observable_times_us: Option<Vec<f64>>,
    pub state_times_us: Option<Vec<f64>>,
    /// Shorthand: n evenly spaced observable times over [0, duration].
    pub observable_samples: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDrive {
    pub qubit_detuning_mhz: Option<f64>,
    pub eps1_mhz: Option<f64>,
    pub nu1_mhz: Option<f64>,
    pub phi1_rad: Option<f64>,
    pub eps2_mhz: Option<f64>,
    pub nu2_mhz: Option<f64>,
    pub phi2_rad: Option<f64>,
    pub drive_amp_mhz: Option<f64>,
    pub g_mhz: Option<f64>,
    pub delta_mhz: Option<f64>,
    pub anharmonicity_mhz: Option<f64>,
    pub stark_subtraction: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCat {
    pub alpha: f64,
    pub cutoff: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRotation {
    pub theta_e_rad: f64,
    pub theta_g_rad: f64,
    pub tf_us: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTomography {
    /// Snapshot JSON files produced by the quench command.
    pub snapshots: Option<Vec<String>>,
    /// Alternative self-contained source: an even cat state.
    pub synthetic_cat: Option<RawCat>,
    pub grid_radius: Option<f64>,
    pub grid_points: Option<usize>,
    /// Separate (usually tighter) grid for the Wigner measurement chain;
    /// defaults to the main grid.
    pub wigner_radius: Option<f64>,
    pub wigner_points: Option<usize>,
    pub reconstruct_cutoff: Option<usize>,
    pub n_max: Option<usize>,
    pub lambda_prime_mhz: Option<f64>,
    pub t1p_us: Option<f64>,
    pub decay_exponent: Option<f64>,
    pub tau_samples: Option<usize>,
    pub tau_span_periods: Option<f64>,
    pub noise_sigma: Option<f64>,
    pub noise_seed: Option<u64>,
    pub apply_rotation: Option<bool>,
    pub rotation: Option<RawRotation>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCalibration {
    /// "synthetic" (known injected optimum, default) or "simulated"
    /// (drive-level model scanned against the engineered phase).
    pub mode: Option<String>,
    pub phase_start_rad: f64,
    pub phase_stop_rad: f64,
    pub phase_count: usize,
    pub injected_phase_rad: Option<f64>,
    pub noise_sigma: Option<f64>,
    pub noise_seed: Option<u64>,
    pub samples: Option<usize>,
    pub duration_ns: Option<f64>,
    pub cutoff: Option<usize>,
}

// ---------------------------------------------------------------------------
// Resolved configuration (library units)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Effective,
    LabTwoLevel,
    LabThreeLevel,
}

#[derive(Debug, Clone)]
pub struct QuenchSetup {
    pub model: Model,
    pub cutoff: usize,
    pub substep_factor: f64,
    pub schedule: QuenchSchedule<f64>,
    pub rates: DecoherenceRates<f64>,
    pub record: RecordSpec<f64>,
    pub drive: DriveParams<f64>,
}

#[derive(Debug, Clone)]
pub enum TomographySource {
    Snapshots(Vec<String>),
    SyntheticCat { alpha: f64, cutoff: usize },
}

#[derive(Debug, Clone)]
pub struct TomographySetup {
    pub source: TomographySource,
    pub grid_radius: f64,
    pub grid_points: usize,
    pub reconstruct_cutoff: usize,
    pub fit: FitConfig<f64>,
    pub tau_samples: usize,
    pub tau_span_periods: f64,
    pub noise_sigma: f64,
    pub noise_seed: u64,
    pub apply_rotation: bool,
    pub rotation: RotationCorrection<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationMode {
    Synthetic,
    Simulated,
}

#[derive(Debug, Clone)]
pub struct CalibrationSetup {
    pub mode: CalibrationMode,
    pub phases: Vec<f64>,
    pub injected_phase: f64,
    pub noise_sigma: f64,
    pub noise_seed: u64,
    pub samples: usize,
    pub duration_us: f64,
    pub cutoff: usize,
    pub drive: DriveParams<f64>,
}

/// Fully parsed configuration. Sections are resolved lazily per command so a
/// quench config does not have to carry tomography settings and vice versa.
pub struct Config {
    pub raw: RawConfig,
    pub source: String,
    pub path: String,
}

/// A validation finding pointing back at the best-matching config line.
#[derive(Debug)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn new(message: impl Into<String>) -> Self {
        Self { line: None, message: message.into() }
    }

    fn report(&self, path: &str) -> String {
        match self.line {
            Some(l) => format!("{path}:{l}: {}", self.message),
            None => format!("{path}: {}", self.message),
        }
    }
}

/// Renders findings into the final multi-line report.
pub fn render_errors(path: &str, errors: &[ConfigError]) -> String {
    errors.iter().map(|e| e.report(path)).collect::<Vec<_>>().join("\n")
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, String> {
        let source = std::fs::read_to_string(path)
            .map_err(|e| format!("{}: cannot read config: {e}", path.display()))?;
        let raw: RawConfig = toml::from_str(&source)
            .map_err(|e| format!("{}: {e}", path.display()))?;
        Ok(Self { raw, source, path: path.display().to_string() })
    }

    /// 1-based line of the first occurrence of `key` as a key or section
    /// header, for pointing validation messages at the offending setting.
    fn line_of(&self, key: &str) -> Option<usize> {
        for (i, line) in self.source.lines().enumerate() {
            let t = line.trim_start();
            if t.starts_with(&format!("{key} ")) || t.starts_with(&format!("{key}=")) {
                return Some(i + 1);
            }
            if t.starts_with('[') && t.trim_start_matches('[').starts_with(key) {
                return Some(i + 1);
            }
        }
        None
    }

    fn err(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError { line: self.line_of(key), message: message.into() }
    }

    // -- section resolvers ---------------------------------------------------

    pub fn quench(&self) -> Result<QuenchSetup, Vec<ConfigError>> {
        let mut errors = Vec::new();

        let sim = self.raw.simulation.as_ref();
        let model = match sim.and_then(|s| s.model.as_deref()).unwrap_or("effective") {
            "effective" => Model::Effective,
            "lab-two-level" => Model::LabTwoLevel,
            "lab-three-level" => Model::LabThreeLevel,
            other => {
                errors.push(self.err(
                    "model",
                    format!(
                        "unknown model '{other}' (expected effective, lab-two-level, \
                         or lab-three-level)"
                    ),
                ));
                Model::Effective
            }
        };
        let cutoff = sim.and_then(|s| s.cutoff).unwrap_or(40);
        if cutoff < 2 {
            errors.push(self.err("cutoff", format!("Fock cutoff {cutoff} must be at least 2")));
        }
        let substep_factor = sim.and_then(|s| s.substep_factor).unwrap_or(1.0);
        if !(substep_factor > 0.0 && substep_factor <= 1.0) {
            errors.push(self.err(
                "substep_factor",
                format!("substep factor {substep_factor} must lie in (0, 1]"),
            ));
        }

        let schedule = match &self.raw.schedule {
            Some(s) => {
                let sched = QuenchSchedule {
                    xi0: s.xi_initial,
                    xi_max: s.xi_final,
                    tf: s.duration_us,
                    ratio: s.omega_delta_ratio,
                    eta: TWO_PI * s.eta_mhz,
                };
                if let Err(e) = sched.validate() {
                    errors.push(self.err("[schedule]", e.to_string()));
                }
                sched
            }
            None => {
                errors.push(ConfigError::new("missing [schedule] section"));
                QuenchSchedule { xi0: 0.5, xi_max: 2.5, tf: 3.0, ratio: 10.0, eta: TWO_PI * 0.735 }
            }
        };

        let rates = self.rates(&mut errors);
        let record = self.record(schedule.tf, &mut errors);
        let drive = self.drive(&mut errors);
        if matches!(model, Model::LabTwoLevel | Model::LabThreeLevel) {
            if let Err(e) = drive.validate() {
                errors.push(self.err("[drive]", e.to_string()));
            }
        }

        if errors.is_empty() {
            Ok(QuenchSetup { model, cutoff, substep_factor, schedule, rates, record, drive })
        } else {
            Err(errors)
        }
    }

    fn rates(&self, errors: &mut Vec<ConfigError>) -> DecoherenceRates<f64> {
        let typical = DecoherenceRates::<f64>::typical();
        let d = self.raw.dissipation.as_ref();
        let rates = DecoherenceRates {
            kappa: d.and_then(|d| d.kappa_per_us).unwrap_or(typical.kappa),
            gamma1: d.and_then(|d| d.gamma1_per_us).unwrap_or(typical.gamma1),
            gamma_phi: d.and_then(|d| d.gamma_phi_per_us).unwrap_or(typical.gamma_phi),
        };
        for (key, value) in [
            ("kappa_per_us", rates.kappa),
            ("gamma1_per_us", rates.gamma1),
            ("gamma_phi_per_us", rates.gamma_phi),
        ] {
            if !value.is_finite() || value < 0.0 {
                errors.push(self.err(key, format!("rate {value} must be finite and >= 0")));
            }
        }
        rates
    }

    fn record(&self, tf: f64, errors: &mut Vec<ConfigError>) -> RecordSpec<f64> {
        let r = self.raw.record.as_ref();
        let observable_times = match r.and_then(|r| r.observable_times_us.clone()) {
            Some(ts) => ts,
            None => {
                let n = r.and_then(|r| r.observable_samples).unwrap_or(61);
                if n < 2 {
                    errors.push(self.err(
                        "observable_samples",
                        format!("need at least 2 samples, got {n}"),
                    ));
                    vec![0.0, tf]
                } else {
                    (0..n).map(|i| tf * i as f64 / (n - 1) as f64).collect()
                }
            }
        };
        for &t in &observable_times {
            if !(0.0..=tf + 1e-12).contains(&t) {
                errors.push(self.err(
                    "observable_times_us",
                    format!("time {t} µs outside the schedule [0, {tf}] µs"),
                ));
                break;
            }
        }
        let state_times = r.and_then(|r| r.state_times_us.clone()).unwrap_or_default();
        for &t in &state_times {
            if !(0.0..=tf + 1e-12).contains(&t) {
                errors.push(self.err(
                    "state_times_us",
                    format!("state time {t} µs outside the schedule [0, {tf}] µs"),
                ));
                break;
            }
        }
        RecordSpec { observable_times, state_times }
    }

    pub fn drive(&self, errors: &mut Vec<ConfigError>) -> DriveParams<f64> {
        let mut p = rabiq::model::reference_drive::<f64>();
        if let Some(d) = &self.raw.drive {
            let mhz = TWO_PI;
            if let Some(v) = d.qubit_detuning_mhz {
                p.omega0 = mhz * v;
            }
            if let Some(v) = d.eps1_mhz {
                p.eps1 = mhz * v;
            }
            if let Some(v) = d.nu1_mhz {
                p.nu1 = mhz * v;
            }
            if let Some(v) = d.phi1_rad {
                p.phi1 = v;
            }
            if let Some(v) = d.eps2_mhz {
                p.eps2 = mhz * v;
            }
            if let Some(v) = d.nu2_mhz {
                p.nu2 = mhz * v;
            }
            if let Some(v) = d.phi2_rad {
                p.phi2 = v;
            }
            if let Some(v) = d.drive_amp_mhz {
                p.drive_amp = mhz * v;
            }
            if let Some(v) = d.g_mhz {
                p.g = mhz * v;
            }
            if let Some(v) = d.delta_mhz {
                p.delta = mhz * v;
            }
            if let Some(v) = d.anharmonicity_mhz {
                p.anharmonicity = mhz * v;
            }
            if let Some(v) = d.stark_subtraction {
                if !(0.0..=1.0).contains(&v) {
                    errors.push(self.err(
                        "stark_subtraction",
                        format!("Stark subtraction scale {v} must lie in [0, 1]"),
                    ));
                }
                p.stark_subtraction = v;
            }
        }
        p
    }

    pub fn tomography(&self) -> Result<TomographySetup, Vec<ConfigError>> {
        let mut errors = Vec::new();
        let t = match &self.raw.tomography {
            Some(t) => t,
            None => return Err(vec![ConfigError::new("missing [tomography] section")]),
        };

        let source = match (&t.snapshots, &t.synthetic_cat) {
            (Some(files), None) if !files.is_empty() => {
                TomographySource::Snapshots(files.clone())
            }
            (None, Some(cat)) => {
                if !(cat.alpha.is_finite() && cat.alpha > 0.0) {
                    errors.push(self.err("alpha", "cat amplitude must be positive"));
                }
                if cat.cutoff < 2 {
                    errors.push(self.err("cutoff", "cat cutoff must be at least 2"));
                }
                TomographySource::SyntheticCat { alpha: cat.alpha, cutoff: cat.cutoff }
            }
            (Some(_), Some(_)) => {
                errors.push(self.err(
                    "snapshots",
                    "give either snapshots or synthetic_cat, not both",
                ));
                TomographySource::SyntheticCat { alpha: 1.5, cutoff: 15 }
            }
            _ => {
                errors.push(self.err(
                    "[tomography]",
                    "tomography needs a source: snapshots = [...] or [tomography.synthetic_cat]",
                ));
                TomographySource::SyntheticCat { alpha: 1.5, cutoff: 15 }
            }
        };

        let grid_radius = t.grid_radius.unwrap_or(3.0);
        if !(grid_radius > 0.0) {
            errors.push(self.err("grid_radius", "grid radius must be positive"));
        }
        let grid_points = t.grid_points.unwrap_or(41);
        if grid_points < 2 {
            errors.push(self.err("grid_points", "grid needs at least 2 points per axis"));
        }
        let reconstruct_cutoff = t.reconstruct_cutoff.unwrap_or(15);
        if grid_points * grid_points < reconstruct_cutoff * reconstruct_cutoff {
            errors.push(self.err(
                "grid_points",
                format!(
                    "{0}x{0} grid cannot determine a {1}-dimensional density matrix; \
                     need at least {2} points",
                    grid_points,
                    reconstruct_cutoff,
                    reconstruct_cutoff * reconstruct_cutoff
                ),
            ));
        }

        let n_max = t.n_max.unwrap_or(14);
        let lambda_prime = TWO_PI * t.lambda_prime_mhz.unwrap_or(20.91);
        let t1p = t.t1p_us.unwrap_or(2.5);
        let fit = match FitConfig::new(lambda_prime, t1p, n_max) {
            Ok(mut cfg) => {
                if let Some(l) = t.decay_exponent {
                    cfg.l = l;
                }
                cfg
            }
            Err(e) => {
                errors.push(self.err("[tomography]", e.to_string()));
                FitConfig::reference(n_max.max(1)).expect("reference fit config")
            }
        };

        let tau_samples = t.tau_samples.unwrap_or(400);
        if tau_samples < 2 * (n_max + 2) {
            errors.push(self.err(
                "tau_samples",
                format!(
                    "{tau_samples} interaction times cannot determine {} photon amplitudes; \
                     need at least {}",
                    n_max + 1,
                    2 * (n_max + 2)
                ),
            ));
        }
        let tau_span_periods = t.tau_span_periods.unwrap_or(4.0);
        if !(tau_span_periods >= 1.0) {
            errors.push(self.err(
                "tau_span_periods",
                "interaction times must span at least one vacuum Rabi period",
            ));
        }

        let noise_sigma = t.noise_sigma.unwrap_or(0.0);
        if !(0.0..1.0).contains(&noise_sigma) {
            errors.push(self.err("noise_sigma", "noise sigma must lie in [0, 1)"));
        }

        let rotation = match &t.rotation {
            Some(r) => RotationCorrection { theta_e: r.theta_e_rad, theta_g: r.theta_g_rad, tf: r.tf_us },
            None => RotationCorrection::reference(),
        };
        if !(rotation.tf > 0.0) {
            errors.push(self.err("tf_us", "rotation reference time must be positive"));
        }

        if errors.is_empty() {
            Ok(TomographySetup {
                source,
                grid_radius,
                grid_points,
                reconstruct_cutoff,
                fit,
                tau_samples,
                tau_span_periods,
                noise_sigma,
                noise_seed: t.noise_seed.unwrap_or(1),
                apply_rotation: t.apply_rotation.unwrap_or(false),
                rotation,
            })
        } else {
            Err(errors)
        }
    }

    pub fn calibration(&self) -> Result<CalibrationSetup, Vec<ConfigError>> {
        let mut errors = Vec::new();
        let c = match &self.raw.calibration {
            Some(c) => c,
            None => return Err(vec![ConfigError::new("missing [calibration] section")]),
        };

        let mode = match c.mode.as_deref().unwrap_or("synthetic") {
            "synthetic" => CalibrationMode::Synthetic,
            "simulated" => CalibrationMode::Simulated,
            other => {
                errors.push(self.err(
                    "mode",
                    format!("unknown calibration mode '{other}' (expected synthetic or simulated)"),
                ));
                CalibrationMode::Synthetic
            }
        };

        if c.phase_count < 5 {
            errors.push(self.err(
                "phase_count",
                format!(
                    "a phase scan needs at least 5 phases to fit a parabola, got {}",
                    c.phase_count
                ),
            ));
        }
        if !(c.phase_stop_rad > c.phase_start_rad) {
            errors.push(self.err(
                "phase_stop_rad",
                "phase_stop_rad must exceed phase_start_rad",
            ));
        }
        let n = c.phase_count.max(2);
        let phases: Vec<f64> = (0..n)
            .map(|i| {
                c.phase_start_rad
                    + (c.phase_stop_rad - c.phase_start_rad) * i as f64 / (n - 1) as f64
            })
            .collect();

        let injected_phase = c.injected_phase_rad.unwrap_or(-0.45);
        if injected_phase < phases[0] || injected_phase > phases[phases.len() - 1] {
            errors.push(self.err(
                "injected_phase_rad",
                format!(
                    "injected optimum {injected_phase} rad lies outside the scanned interval \
                     [{}, {}]",
                    phases[0],
                    phases[phases.len() - 1]
                ),
            ));
        }

        let samples = c.samples.unwrap_or(50);
        if samples < 2 {
            errors.push(self.err("samples", "population curves need at least 2 samples"));
        }
        let duration_ns = c.duration_ns.unwrap_or(200.0);
        if !(duration_ns > 0.0) {
            errors.push(self.err("duration_ns", "duration must be positive"));
        }
        let cutoff = c.cutoff.unwrap_or(10);
        if cutoff < 2 {
            errors.push(self.err("cutoff", "calibration cutoff must be at least 2"));
        }
        let noise_sigma = c.noise_sigma.unwrap_or(1e-4);
        if !(0.0..0.5).contains(&noise_sigma) {
            errors.push(self.err("noise_sigma", "noise sigma must lie in [0, 0.5)"));
        }

        let drive = self.drive(&mut errors);
        if mode == CalibrationMode::Simulated {
            if let Err(e) = drive.validate() {
                errors.push(self.err("[drive]", e.to_string()));
            }
        }

        if errors.is_empty() {
            Ok(CalibrationSetup {
                mode,
                phases,
                injected_phase,
                noise_sigma,
                noise_seed: c.noise_seed.unwrap_or(7),
                samples,
                duration_us: duration_ns * 1e-3,
                cutoff,
                drive,
            })
        } else {
            Err(errors)
        }
    }

    /// Validates every section that is present; used by `validate-config`.
    pub fn validate_all(&self) -> Result<Vec<String>, Vec<ConfigError>> {
        let mut validated = Vec::new();
        let mut errors = Vec::new();

        if self.raw.schedule.is_some() || self.raw.simulation.is_some() {
            match self.quench() {
                Ok(_) => validated.push("quench".to_string()),
                Err(mut e) => errors.append(&mut e),
            }
        }
        if self.raw.tomography.is_some() {
            match self.tomography() {
                Ok(_) => validated.push("tomography".to_string()),
                Err(mut e) => errors.append(&mut e),
            }
        }
        if self.raw.calibration.is_some() {
            match self.calibration() {
                Ok(_) => validated.push("calibration".to_string()),
                Err(mut e) => errors.append(&mut e),
            }
        }
        if validated.is_empty() && errors.is_empty() {
            errors.push(ConfigError::new(
                "config declares no runnable section ([schedule], [tomography], or [calibration])",
            ));
        }

        if errors.is_empty() {
            Ok(validated)
        } else {
            Err(errors)
        }
    }
}
