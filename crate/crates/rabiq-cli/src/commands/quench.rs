//! `rabiq quench` — integrate a quench schedule and write the observable
//! series, the requested density-matrix snapshots, and a run manifest.

use std::path::Path;

use rabiq::dynamics::{full_model_quench, quench_run, EvolutionResult, LindbladSpec, StepOptions};
use rabiq::hilbert::{FockSpace, QubitSpace};
use rabiq::model::schedule_at;
use serde_json::json;

use crate::config::{Config, Model};
use crate::io::{hex_digest, observables_csv, to_json, OutputDir, Snapshot};
use crate::AppError;

pub fn run(cfg: &Config, out: &Path) -> Result<(), AppError> {
    let setup = cfg.quench().map_err(|es| AppError::config(cfg, es))?;
    let space = FockSpace::new(setup.cutoff);
    let opts = StepOptions { substep_factor: setup.substep_factor, ..StepOptions::default() };

    let (levels, result): (usize, EvolutionResult<f64>) = match setup.model {
        Model::Effective => {
            let l = LindbladSpec::standard(&setup.rates, QubitSpace::new(2), space);
            (2, quench_run(&setup.schedule, &l, space, &setup.record, &opts)?)
        }
        Model::LabTwoLevel | Model::LabThreeLevel => {
            let q = match setup.model {
                Model::LabThreeLevel => QubitSpace::new(3),
                _ => QubitSpace::new(2),
            };
            let l = LindbladSpec::standard(&setup.rates, q, space);
            let r = full_model_quench(
                &setup.drive,
                &setup.schedule,
                &l,
                q,
                space,
                &setup.record,
                &opts,
            )?;
            (q.dim(), r)
        }
    };

    let mut dir = OutputDir::create(out)?;

    // Observable series with the scheduled coupling ratio ξ(t) alongside.
    let xi: Vec<f64> = result
        .times
        .iter()
        .map(|&t| {
            let tc = t.clamp(0.0, setup.schedule.tf);
            schedule_at(&setup.schedule, tc).map(|e| e.xi)
        })
        .collect::<Result<_, _>>()?;
    let obs = &result.observables;
    dir.write(
        "observables.csv",
        &observables_csv(&result.times, &xi, &obs.nbar, &obs.p_g, &obs.p_e, &obs.p_f, &obs.parity),
    )?;

    // One snapshot file per recorded state time.
    for (t, rho) in result.state_times.iter().zip(result.states.iter()) {
        let snap = Snapshot::from_density(rho, "joint", levels, setup.cutoff, Some(*t));
        dir.write(&format!("state_t{t}.json"), &to_json(&snap))?;
    }

    let n = result.times.len();
    let d = &result.diagnostics;
    let model_name = match setup.model {
        Model::Effective => "effective",
        Model::LabTwoLevel => "lab-two-level",
        Model::LabThreeLevel => "lab-three-level",
    };
    let summary = json!({
        "model": model_name,
        "cutoff": setup.cutoff,
        "schedule": {
            "xi_initial": setup.schedule.xi0,
            "xi_final": setup.schedule.xi_max,
            "duration_us": setup.schedule.tf,
            "omega_delta_ratio": setup.schedule.ratio,
            "eta_rad_per_us": setup.schedule.eta,
        },
        "final": if n > 0 { json!({
            "t_us": result.times[n - 1],
            "nbar": obs.nbar[n - 1],
            "p_g": obs.p_g[n - 1],
            "p_e": obs.p_e[n - 1],
            "p_f": obs.p_f[n - 1],
            "parity": obs.parity[n - 1],
        }) } else { json!(null) },
        "p_f_mean": if n > 0 { json!(obs.p_f.iter().sum::<f64>() / n as f64) } else { json!(null) },
        "p_f_max": obs.p_f.iter().cloned().fold(f64::NAN, f64::max).into_json(),
        "diagnostics": {
            "step_us": d.step,
            "steps_taken": d.steps_taken,
            "norm_drift": d.norm_drift,
            "trace_drift": d.trace_drift,
            "min_eigenvalue": d.min_eigenvalue,
            "positivity_alarm": d.positivity_alarm,
            "truncation_max": d.truncation_max,
            "truncation_alarm": d.truncation_alarm,
        },
        "snapshots": result.state_times,
    });
    dir.write("summary.json", &to_json(&summary))?;

    let span_end = result
        .times
        .iter()
        .chain(result.state_times.iter())
        .cloned()
        .fold(0.0f64, f64::max);
    dir.finish(&hex_digest(cfg.source.as_bytes()), Some([0.0, span_end]))?;
    Ok(())
}

/// `f64::max` folds to NaN on empty input; the summary wants null there.
trait IntoJson {
    fn into_json(self) -> serde_json::Value;
}

impl IntoJson for f64 {
    fn into_json(self) -> serde_json::Value {
        if self.is_nan() {
            serde_json::Value::Null
        } else {
            json!(self)
        }
    }
}
