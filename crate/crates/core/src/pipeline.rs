//! Training orchestration: feature pipeline, R_eff regressors, historical
//! compartmental run, correction ensembles.
//!
//! Independent training jobs (three R_eff bands, every ensemble member) are
//! handed to an [`Executor`]; results are identical whatever the executor,
//! since every job owns its seed.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::correction::{self, CorrectionConfig, CorrectionEnsemble, CorrectionFeatures};
use crate::data::{AgeStructure, Band, NpiSchedule, ReffEstimates, Target, TargetSeries, WeatherSeries};
use crate::features::{FeatureConfig, FeatureMatrix, FeaturePipeline};
use crate::reff::{self, ClampMode, ReffBands, ReffConfig, ReffRegressorSet};
use crate::seirfv::{self, Clinical, EpiParams, SeedAllocation, Trajectory, VaccinePlan};
use crate::{Date, Error, Result};

/// Version of the serialised [`TrainedPipeline`] layout.
pub const BUNDLE_VERSION: u32 = 1;

pub type Job<'a, T> = Box<dyn FnOnce() -> T + Send + 'a>;

/// Runs independent jobs, returning results in job order.
pub trait Executor {
    fn run<'a, T: Send + 'a>(&self, jobs: Vec<Job<'a, T>>) -> Vec<T>;
}

/// Runs jobs one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn run<'a, T: Send + 'a>(&self, jobs: Vec<Job<'a, T>>) -> Vec<T> {
        jobs.into_iter().map(|j| j()).collect()
    }
}

/// Historical inputs a trained pipeline keeps for scenario runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoricalInputs {
    pub weather: WeatherSeries,
    pub npis: NpiSchedule,
    pub reff: ReffEstimates,
}

/// Everything the compartmental engine needs besides R_eff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpiSetup {
    pub params: EpiParams,
    pub age: AgeStructure,
    pub seed_infections: f64,
    /// Relative to the training window start.
    pub vaccination: VaccinePlan,
}

impl EpiSetup {
    /// Runs the engine once per band from the seeded initial state.
    pub fn simulate_bands(&self, bands: &ReffBands) -> Result<[Trajectory; 3]> {
        let init = seirfv::init_state(&self.age.population, self.seed_infections, SeedAllocation::default())?;
        let clinical = Clinical::from(&self.age);
        let run = |b: Band| seirfv::simulate(&init, bands.band(b), &self.params, &clinical, self.vaccination, bands.start_date);
        Ok([run(Band::Lower)?, run(Band::Mean)?, run(Band::Upper)?])
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub features: FeatureConfig,
    pub reff: ReffConfig,
    pub correction: CorrectionConfig,
    /// Training window; defaults to the overlap of NPIs, R_eff and targets.
    pub window_start: Option<Date>,
    pub window_end: Option<Date>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    /// Validation R² of the lower, mean and upper regressors.
    pub reff_validation_r2: [Option<f64>; 3],
    /// Per target: mean of the members' best validation losses.
    pub correction_validation_loss: Vec<(Target, f64)>,
}

/// All trained artifacts plus the inputs needed to replay scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedPipeline {
    pub version: u32,
    pub window_start: Date,
    pub window_end: Date,
    pub features: FeaturePipeline,
    pub reff: ReffRegressorSet,
    pub ensembles: Vec<CorrectionEnsemble>,
    pub epi: EpiSetup,
    pub inputs: HistoricalInputs,
    pub report: TrainingReport,
}

impl TrainedPipeline {
    pub fn check_version(&self) -> Result<()> {
        if self.version != BUNDLE_VERSION {
            return Err(Error::invalid(format!(
                "artifact bundle version {} is not supported (expected {BUNDLE_VERSION})",
                self.version
            )));
        }
        Ok(())
    }

    pub fn days(&self) -> usize {
        (self.window_end - self.window_start).num_days() as usize + 1
    }

    pub fn ensemble(&self, target: Target) -> Option<&CorrectionEnsemble> {
        self.ensembles.iter().find(|e| e.target == target)
    }

    /// Compartmental runs driven directly by the historical R_eff estimates
    /// over the training window.
    pub fn reference_run(&self) -> Result<[Trajectory; 3]> {
        let est = self.inputs.reff.window(self.window_start, self.window_end)?;
        let bands = ReffBands {
            start_date: self.window_start,
            lower: est.band(Band::Lower).to_vec(),
            mean: est.band(Band::Mean).to_vec(),
            upper: est.band(Band::Upper).to_vec(),
        };
        self.epi.simulate_bands(&bands)
    }
}

/// Overlap of NPIs, R_eff estimates and targets, optionally narrowed.
pub fn training_window(inputs: &HistoricalInputs, targets: &TargetSeries, config: &PipelineConfig) -> Result<(Date, Date)> {
    let mut start = inputs.npis.start_date().max(inputs.reff.start_date()).max(targets.start_date());
    let mut end = inputs.npis.end_date().min(inputs.reff.end_date()).min(targets.end_date());
    if let Some(s) = config.window_start {
        start = start.max(s);
    }
    if let Some(e) = config.window_end {
        end = end.min(e);
    }
    if end < start || (end - start).num_days() < 30 {
        return Err(Error::Coverage {
            what: "training window (NPIs, R_eff and targets overlap)",
            start,
            end,
        });
    }
    Ok((start, end))
}

/// Historical predicted R_eff bands, clamped to the estimates.
pub fn historical_bands(set: &ReffRegressorSet, features: &FeatureMatrix, estimates: &ReffEstimates) -> Result<ReffBands> {
    let predicted = reff::predict_reff(set, features)?;
    reff::clamp_to_historical(&predicted, estimates, ClampMode::Backwards)
}

/// Trains every stage. Jobs within a stage go through `exec`.
pub fn train_pipeline<E: Executor>(
    inputs: HistoricalInputs,
    targets: &TargetSeries,
    epi: EpiSetup,
    config: &PipelineConfig,
    exec: &E,
) -> Result<TrainedPipeline> {
    config.correction.validate()?;
    epi.params.validate()?;
    let (start, end) = training_window(&inputs, targets, config)?;
    let estimates = inputs.reff.window(start, end)?;
    let (features, fm) = FeaturePipeline::fit(
        &inputs.weather,
        &inputs.npis,
        estimates.band(Band::Mean),
        start,
        end,
        &config.features,
    )?;

    let fm_ref = &fm;
    let est_ref = &estimates;
    let reff_jobs: Vec<Job<'_, Result<_>>> = Band::ALL
        .into_iter()
        .map(|b| -> Job<'_, Result<_>> { Box::new(move || reff::train_band(fm_ref, est_ref, b, &config.reff)) })
        .collect();
    let mut bands = exec.run(reff_jobs).into_iter();
    let mut next = || bands.next().expect("three band jobs");
    let (lower, mean, upper) = (next()?, next()?, next()?);
    let set = ReffRegressorSet::from_bands(&fm, lower, mean, upper)?;

    let hist = historical_bands(&set, &fm, &estimates)?;
    let [_, mean_run, _] = epi.simulate_bands(&hist)?;
    let spec = CorrectionFeatures::fit(&mean_run)?;
    let x = correction::build_correction_inputs(&mean_run, &spec)?;
    let tw = targets.window(start, end)?;

    let cc = &config.correction;
    let x_ref = &x;
    let tw_ref = &tw;
    let mut member_jobs: Vec<Job<'_, Result<_>>> = Vec::new();
    for target in Target::ALL {
        for i in 0..cc.members {
            member_jobs.push(Box::new(move || correction::train_member(x_ref, tw_ref.get(target), target, cc, i)));
        }
    }
    let mut members = exec.run(member_jobs).into_iter();
    let mut ensembles = Vec::with_capacity(4);
    let mut losses = Vec::with_capacity(4);
    for target in Target::ALL {
        let ms = (&mut members).take(cc.members).collect::<Result<Vec<_>>>()?;
        let mean_loss = ms.iter().map(|m| m.validation_loss).sum::<f64>() / ms.len() as f64;
        losses.push((target, mean_loss));
        ensembles.push(correction::ensemble_from_members(target, cc, spec.clone(), ms)?);
    }

    let report = TrainingReport {
        reff_validation_r2: set.validation_r2(),
        correction_validation_loss: losses,
    };
    Ok(TrainedPipeline {
        version: BUNDLE_VERSION,
        window_start: start,
        window_end: end,
        features,
        reff: set,
        ensembles,
        epi,
        inputs,
        report,
    })
}
