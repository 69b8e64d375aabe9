//! Config-driven experiment runs: build every dataset, cross-validate, and
//! write the result files.

pub mod config;
pub mod datasets;
pub mod output;

use std::path::PathBuf;

pub use config::ExperimentConfig;
pub use datasets::{build_dataset, dataset_cache_path, mea_config, prepare_datasets, DatasetTable};
pub use output::{load_bundle, report, FamilyResults, ResultsBundle};

use crate::error::{Error, Result};
use crate::eval::{cross_validate, SamplerGroup};

#[derive(Debug)]
pub struct RunOutcome {
    pub bundle: ResultsBundle,
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    pub fn missing_cells(&self) -> usize {
        self.bundle.missing_cells
    }
}

/// Runs `f` on a pool of `jobs` threads, or on the global pool.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn run_inner(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let table = prepare_datasets(cfg)?;
    let matrix = cross_validate(&table, &cfg.samplers, &cfg.families, &cfg.train, cfg.split_fraction)?;
    let missing_cells = matrix.missing().count();
    for cell in matrix.missing() {
        log::warn!(
            "missing cell seed {} {} train {} test {}: {}",
            cell.seed,
            cell.family,
            cell.train,
            cell.test,
            cell.error.as_deref().unwrap_or("unknown error")
        );
    }
    let families = cfg.families.iter().map(|&f| output::family_results(&matrix, f)).collect::<Result<Vec<_>>>()?;
    let bundle = ResultsBundle {
        format_version: output::RESULTS_FORMAT_VERSION,
        config: cfg.clone(),
        matrix,
        families,
        missing_cells,
    };
    let first_seed = cfg.seeds[0];
    let scatter: Vec<_> = cfg
        .samplers
        .iter()
        .filter(|s| s.group() == SamplerGroup::AgentBased)
        .filter_map(|&s| table[&first_seed][&s].as_ref().ok().map(|d| (s, d)))
        .collect();
    let files = output::render(&bundle, &scatter)?;
    output::write_all(&cfg.out_dir, &files)?;
    Ok(RunOutcome { files: files.into_iter().map(|(p, _)| cfg.out_dir.join(p)).collect(), bundle })
}

/// Full pipeline: datasets (cached), cross-validation over every seed,
/// and result files in `cfg.out_dir`. Per-cell failures are recorded, not
/// fatal.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    with_jobs(cfg.jobs, || run_inner(cfg))?
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvKind;
    use crate::eval::SamplerId;
    use crate::surrogate::{Family, GbtConfig};

    #[test]
    fn tiny_run_writes_every_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig {
            env: EnvKind::CartPole,
            samplers: vec![SamplerId::Lhs, SamplerId::Ra, SamplerId::Ea],
            samples: 200,
            families: vec![Family::Gbt],
            seeds: vec![0, 1],
            out_dir: dir.path().join("out"),
            jobs: Some(2),
            ..Default::default()
        };
        cfg.train.gbt = GbtConfig { trees: 20, ..Default::default() };
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.missing_cells(), 0);
        for name in [
            "matrix_gbt.csv",
            "groups_gbt.csv",
            "ranked_gbt.csv",
            "heatmap_gbt.svg",
            "results.json",
            "scatter_ra.csv",
            "scatter_ea.csv",
        ] {
            assert!(cfg.out_dir.join(name).exists(), "{name}");
        }
        let matrix = std::fs::read_to_string(cfg.out_dir.join("matrix_gbt.csv")).unwrap();
        assert_eq!(matrix.lines().count(), 4);
        assert!(matrix.starts_with("test,lhs,ra,ea\n"));
        let bundle = load_bundle(&cfg.out_dir).unwrap();
        assert_eq!(bundle, out.bundle);
        assert!(report(&bundle).contains("[gbt] groups"));
        assert!(load_bundle(dir.path()).is_err());
    }
}
