//! Cross-validation of surrogates against every dataset, and the
//! aggregations reported from it.

pub mod stats;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use stats::{mean, r2_score, std_dev, welch_t_test, R2Score, WelchTest};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::{rng_from, tag};
use crate::surrogate::{self, Family, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerId {
    Al,
    Lhs,
    Sobol,
    Random,
    Ea,
    Ra,
    Mea,
    Ma,
    Mpa,
    Pa,
}

impl SamplerId {
    pub const ALL: [SamplerId; 10] = [
        SamplerId::Al,
        SamplerId::Lhs,
        SamplerId::Sobol,
        SamplerId::Random,
        SamplerId::Ea,
        SamplerId::Ra,
        SamplerId::Mea,
        SamplerId::Ma,
        SamplerId::Mpa,
        SamplerId::Pa,
    ];

    pub fn id(self) -> &'static str {
        match self {
            SamplerId::Al => "al",
            SamplerId::Lhs => "lhs",
            SamplerId::Sobol => "sobol",
            SamplerId::Random => "random",
            SamplerId::Ea => "ea",
            SamplerId::Ra => "ra",
            SamplerId::Mea => "mea",
            SamplerId::Ma => "ma",
            SamplerId::Mpa => "mpa",
            SamplerId::Pa => "pa",
        }
    }

    pub fn group(self) -> SamplerGroup {
        match self {
            SamplerId::Al => SamplerGroup::Kriging,
            SamplerId::Lhs | SamplerId::Sobol | SamplerId::Random => SamplerGroup::Generative,
            _ => SamplerGroup::AgentBased,
        }
    }
}

impl fmt::Display for SamplerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for SamplerId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SamplerId::ALL.into_iter().find(|x| x.id() == s).ok_or_else(|| Error::UnknownSampler(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerGroup {
    Kriging,
    Generative,
    AgentBased,
}

impl SamplerGroup {
    pub const ALL: [SamplerGroup; 3] = [SamplerGroup::Kriging, SamplerGroup::Generative, SamplerGroup::AgentBased];

    pub fn label(self) -> &'static str {
        match self {
            SamplerGroup::Kriging => "kriging",
            SamplerGroup::Generative => "generative",
            SamplerGroup::AgentBased => "agent_based",
        }
    }
}

impl fmt::Display for SamplerGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Shuffled split into `floor(f * k)` training and `k - floor(f * k)` test
/// rows.
pub fn split_dataset(d: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("train fraction {train_fraction} not in (0, 1)")));
    }
    let k = d.len();
    if k < 2 {
        return Err(Error::NotEnoughSamples { needed: 2, got: k });
    }
    let n_train = (train_fraction * k as f64).floor() as usize;
    if n_train == 0 || n_train == k {
        return Err(Error::InvalidArgument(format!("split of {k} rows at {train_fraction} leaves a side empty")));
    }
    let mut rows: Vec<usize> = (0..k).collect();
    rows.shuffle(&mut rng_from(seed, &[tag("split")]));
    Ok((d.select(&rows[..n_train], None), d.select(&rows[n_train..], None)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub family: Family,
    pub train: SamplerId,
    pub test: SamplerId,
    pub seed: u64,
    pub score: Option<R2Score>,
    /// Reason the cell is missing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Seed-averaged view of one `(family, train, test)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub family: Family,
    pub train: SamplerId,
    pub test: SamplerId,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub seeds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMatrix {
    pub samplers: Vec<SamplerId>,
    pub families: Vec<Family>,
    pub seeds: Vec<u64>,
    pub cells: Vec<Cell>,
}

impl EvalMatrix {
    /// Averaged scores of one grid position, ordered by seed.
    pub fn scores(&self, family: Family, train: SamplerId, test: SamplerId) -> Vec<f64> {
        let mut s: Vec<(u64, f64)> = self
            .cells
            .iter()
            .filter(|c| c.family == family && c.train == train && c.test == test)
            .filter_map(|c| c.score.as_ref().map(|s| (c.seed, s.average)))
            .collect();
        s.sort_by_key(|&(seed, _)| seed);
        s.into_iter().map(|(_, v)| v).collect()
    }

    pub fn summary(&self, family: Family, train: SamplerId, test: SamplerId) -> CellSummary {
        let s = self.scores(family, train, test);
        let (mean, std) = if s.is_empty() { (None, None) } else { (Some(mean(&s)), Some(std_dev(&s))) };
        CellSummary { family, train, test, mean, std, seeds: s.len() }
    }

    pub fn summaries(&self, family: Family) -> Vec<CellSummary> {
        self.samplers
            .iter()
            .flat_map(|&test| self.samplers.iter().map(move |&train| (train, test)))
            .map(|(train, test)| self.summary(family, train, test))
            .collect()
    }

    pub fn missing(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(|c| c.score.is_none())
    }

    /// `(family, train, test)` grid positions with at least one seed scored.
    pub fn complete_cells(&self) -> usize {
        self.families.iter().map(|&f| self.summaries(f).iter().filter(|s| s.mean.is_some()).count()).sum()
    }
}

/// Trains one model per `(seed, sampler, family)` on the sampler's training
/// split and scores it on every sampler's test split of the same seed.
/// `datasets[seed]` maps each sampler to its full dataset, or the error
/// that prevented building it; failures become missing cells.
pub fn cross_validate(
    datasets: &BTreeMap<u64, BTreeMap<SamplerId, std::result::Result<Dataset, String>>>,
    samplers: &[SamplerId],
    families: &[Family],
    cfg: &TrainConfig,
    train_fraction: f64,
) -> Result<EvalMatrix> {
    if samplers.is_empty() || families.is_empty() {
        return Err(Error::InvalidArgument("cross-validation needs at least one sampler and one family".into()));
    }
    let mut cells = Vec::new();
    for (&seed, sets) in datasets {
        let splits: BTreeMap<SamplerId, std::result::Result<(Dataset, Dataset), String>> = samplers
            .iter()
            .map(|&s| {
                let split = match sets.get(&s) {
                    Some(Ok(d)) => split_dataset(d, train_fraction, seed).map_err(|e| e.to_string()),
                    Some(Err(e)) => Err(e.clone()),
                    None => Err(format!("no dataset for sampler {s}")),
                };
                (s, split)
            })
            .collect();
        let jobs: Vec<(SamplerId, Family)> =
            samplers.iter().flat_map(|&s| families.iter().map(move |&f| (s, f))).collect();
        let results: Vec<Vec<Cell>> = jobs
            .par_iter()
            .map(|&(train, family)| {
                let cell = |test, score, error| Cell { family, train, test, seed, score, error };
                let model = match &splits[&train] {
                    Ok((tr, _)) => surrogate::fit(family, tr, cfg, seed).map_err(|e| e.to_string()),
                    Err(e) => Err(format!("training data unavailable: {e}")),
                };
                if let Err(e) = &model {
                    log::warn!("seed {seed}: {family} on {train} failed: {e}");
                }
                samplers
                    .iter()
                    .map(|&test| {
                        let scored = model.as_ref().map_err(Clone::clone).and_then(|m| match &splits[&test] {
                            Ok((_, te)) => m
                                .predict_transitions(&te.transitions)
                                .and_then(|pred| r2_score(&te.next_states(), &pred))
                                .map_err(|e| e.to_string()),
                            Err(e) => Err(format!("test data unavailable: {e}")),
                        });
                        match scored {
                            Ok(s) => cell(test, Some(s), None),
                            Err(e) => cell(test, None, Some(e)),
                        }
                    })
                    .collect()
            })
            .collect();
        cells.extend(results.into_iter().flatten());
    }
    Ok(EvalMatrix {
        samplers: samplers.to_vec(),
        families: families.to_vec(),
        seeds: datasets.keys().copied().collect(),
        cells,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: SamplerGroup,
    pub mean: f64,
    pub std: f64,
    /// Pooled seed-averaged cell scores the statistics were computed from.
    pub values: Vec<f64>,
}

/// Pools the seed-averaged scores of every training sampler in a group
/// over the given test datasets (all of them when `tests` is `None`).
/// Scores are not clamped. Groups with no sampler in the roster are
/// omitted.
pub fn aggregate_groups(matrix: &EvalMatrix, family: Family, tests: Option<&[SamplerId]>) -> Result<Vec<GroupSummary>> {
    let tests: Vec<SamplerId> = tests.map_or_else(|| matrix.samplers.clone(), <[_]>::to_vec);
    let mut out = Vec::new();
    for group in SamplerGroup::ALL {
        let trainers: Vec<SamplerId> = matrix.samplers.iter().copied().filter(|s| s.group() == group).collect();
        if trainers.is_empty() {
            continue;
        }
        let values: Vec<f64> = trainers
            .iter()
            .flat_map(|&tr| tests.iter().map(move |&te| (tr, te)))
            .filter_map(|(tr, te)| matrix.summary(family, tr, te).mean)
            .collect();
        if values.is_empty() {
            return Err(Error::InvalidArgument(format!("group {group} has no scored cells for {family}")));
        }
        out.push(GroupSummary { group, mean: mean(&values), std: std_dev(&values), values });
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument("no sampler groups in the roster".into()));
    }
    Ok(out)
}

/// Mean over test datasets of each training sampler's seed-averaged score,
/// sorted descending. Ties keep roster order.
pub fn average_by_trainer(matrix: &EvalMatrix, family: Family) -> Vec<(SamplerId, f64)> {
    let mut ranked: Vec<(SamplerId, f64)> = matrix
        .samplers
        .iter()
        .filter_map(|&train| {
            let v: Vec<f64> =
                matrix.samplers.iter().filter_map(|&test| matrix.summary(family, train, test).mean).collect();
            (!v.is_empty()).then(|| (train, mean(&v)))
        })
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    ranked
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClampedCell {
    pub train: SamplerId,
    pub test: SamplerId,
    pub raw: Option<f64>,
    pub clamped: Option<f64>,
}

/// Seed-averaged cells clipped into `[lo, hi]` for display.
pub fn clamp_scores(matrix: &EvalMatrix, family: Family, lo: f64, hi: f64) -> Result<Vec<ClampedCell>> {
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!("clamp bounds {lo} >= {hi}")));
    }
    Ok(matrix
        .summaries(family)
        .into_iter()
        .map(|s| ClampedCell { train: s.train, test: s.test, raw: s.mean, clamped: s.mean.map(|v| v.clamp(lo, hi)) })
        .collect())
}
