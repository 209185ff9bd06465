//! Multi-seed studies: the diagnosis table, the frozen-feature table and the
//! imputation table, each over the configured split seeds.

use labdx_core::imputation::{Heuristic, ImputationTable};
use labdx_core::models::{Architecture, Model};

use crate::config::RunConfig;
use crate::error::CliResult;
use crate::experiment::{
    evaluate_model, feature_transfer, imputation_run, prepare_split, train_on_split, ModelSpec,
    PreparedSplit,
};
use crate::io::LoadedData;
use crate::report::{DiagnosisTable, SeedRow};

/// One trained model per split seed.
pub struct SeedModels {
    pub name: String,
    pub models: Vec<Model>,
}

pub struct Study {
    pub config: RunConfig,
    pub num_classes: usize,
    pub splits: Vec<PreparedSplit>,
}

impl Study {
    pub fn new(config: &RunConfig, data: &LoadedData) -> CliResult<Self> {
        let splits = config
            .split_seeds
            .iter()
            .map(|&s| prepare_split(&data.episodes, s))
            .collect::<labdx_core::Result<Vec<_>>>()?;
        Ok(Self {
            config: config.clone(),
            num_classes: data.num_classes,
            splits,
        })
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.splits.iter().map(|s| s.seed).collect()
    }

    /// The run's hyperparameters with another architecture and loss weight.
    pub fn spec(&self, arch: Architecture, disc_weight: f64) -> ModelSpec {
        ModelSpec {
            arch,
            disc_weight,
            ..self.config.model_spec()
        }
    }

    /// Trains `spec` once per split seed.
    pub fn train(&self, spec: &ModelSpec, log: &mut dyn FnMut(&str)) -> CliResult<SeedModels> {
        let name = spec.display_name();
        let cfg = self.config.train_config();
        let mut models = Vec::with_capacity(self.splits.len());
        for split in &self.splits {
            let outcome = train_on_split(split, spec, self.num_classes, &cfg)?;
            log(&format!(
                "{name} split {}: {} epochs, best {:?}",
                split.seed,
                outcome.state.history.len(),
                outcome.state.best_epoch
            ));
            models.push(outcome.model);
        }
        Ok(SeedModels { name, models })
    }

    /// Test-set metrics for each model set, with paired t-tests against
    /// `reference`.
    pub fn diagnosis(&self, sets: &[&SeedModels], reference: &str) -> CliResult<DiagnosisTable> {
        let mut rows = Vec::with_capacity(sets.len());
        for set in sets {
            let per_seed = set
                .models
                .iter()
                .zip(&self.splits)
                .map(|(m, split)| {
                    evaluate_model(m, &split.test, &self.config.class_names).map(|r| r.headline())
                })
                .collect::<labdx_core::Result<Vec<_>>>()?;
            rows.push(SeedRow::new(set.name.clone(), per_seed));
        }
        Ok(DiagnosisTable::new(
            self.config.hash(),
            self.seeds(),
            rows,
            reference,
        )?)
    }

    /// Frozen features from each model set feed a fresh NN per split seed.
    pub fn transfer(&self, sources: &[&SeedModels], reference: &str) -> CliResult<DiagnosisTable> {
        let head = self.spec(Architecture::Nn, 1.0);
        let cfg = self.config.train_config();
        let mut rows = Vec::with_capacity(sources.len());
        for set in sources {
            let mut per_seed = Vec::with_capacity(self.splits.len());
            for (m, split) in set.models.iter().zip(&self.splits) {
                let (_, report) =
                    feature_transfer(m, split, &head, &cfg, &self.config.class_names)?;
                per_seed.push(report.headline());
            }
            rows.push(SeedRow::new(feature_row_name(&set.name), per_seed));
        }
        Ok(DiagnosisTable::new(
            self.config.hash(),
            self.seeds(),
            rows,
            &feature_row_name(reference),
        )?)
    }

    /// Drop-and-score imputation on each split's test episodes, using the
    /// split seed as the drop seed. Methods are compared against zero-fill.
    pub fn imputation(&self, models: &SeedModels) -> CliResult<ImputationTable> {
        let runs = models
            .models
            .iter()
            .zip(&self.splits)
            .map(|(m, split)| imputation_run(m, &split.test, self.config.drop_rate, split.seed))
            .collect::<labdx_core::Result<Vec<_>>>()?;
        Ok(ImputationTable::from_runs(&runs, Heuristic::Zero.label())?)
    }
}

pub fn feature_row_name(source: &str) -> String {
    format!("{source} features")
}
