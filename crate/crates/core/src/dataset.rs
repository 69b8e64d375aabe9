//! Transition records, datasets and their on-disk format.
//!
//! A dataset is written as a CSV with header
//! `s0..s{n-1},a0..a{m'-1},ns0..ns{n-1},reward,done` plus a
//! `<name>.meta.json` sidecar holding provenance.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::{Action, EnvKind, EnvSpec};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Action,
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    /// Step index within the episode; zero for generative samples.
    pub step: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub env: EnvKind,
    pub sampler: String,
    pub seed: u64,
    pub count: usize,
    /// Constituent sampler ids of a mixed dataset.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sources: Vec<String>,
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
    pub format_version: u32,
}

impl DatasetMeta {
    pub fn new(env: EnvKind, sampler: impl Into<String>, seed: u64) -> Self {
        DatasetMeta {
            env,
            sampler: sampler.into(),
            seed,
            count: 0,
            sources: Vec::new(),
            params: BTreeMap::new(),
            format_version: FORMAT_VERSION,
        }
    }

    pub fn with_param(mut self, key: &str, value: impl Serialize) -> Self {
        self.params.insert(key.to_string(), serde_json::to_value(value).expect("serializable param"));
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub transitions: Vec<Transition>,
}

impl Dataset {
    pub fn new(mut meta: DatasetMeta, transitions: Vec<Transition>) -> Self {
        meta.count = transitions.len();
        Dataset { meta, transitions }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn spec(&self) -> EnvSpec {
        self.meta.env.spec()
    }

    /// Dataset restricted to the given rows, in the given order.
    pub fn select(&self, rows: &[usize], sampler: Option<&str>) -> Dataset {
        let mut meta = self.meta.clone();
        if let Some(s) = sampler {
            meta.sampler = s.to_string();
        }
        Dataset::new(meta, rows.iter().map(|&i| self.transitions[i].clone()).collect())
    }

    pub fn states(&self) -> Vec<Vec<f64>> {
        self.transitions.iter().map(|t| t.state.clone()).collect()
    }

    pub fn next_states(&self) -> Vec<Vec<f64>> {
        self.transitions.iter().map(|t| t.next_state.clone()).collect()
    }

    fn header(spec: &EnvSpec) -> Vec<String> {
        let n = spec.state_dim;
        let m = spec.action_space.encoded_dim();
        (0..n)
            .map(|i| format!("s{i}"))
            .chain((0..m).map(|i| format!("a{i}")))
            .chain((0..n).map(|i| format!("ns{i}")))
            .chain(["reward".to_string(), "done".to_string()])
            .collect()
    }

    /// Serializes the transitions as CSV. Floats use the shortest
    /// representation that round-trips exactly.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let spec = self.spec();
        let mut out = csv::Writer::from_writer(w);
        out.write_record(Self::header(&spec))?;
        let mut row: Vec<String> = Vec::new();
        for t in &self.transitions {
            row.clear();
            row.extend(t.state.iter().map(f64::to_string));
            row.extend(t.action.encode().iter().map(f64::to_string));
            row.extend(t.next_state.iter().map(f64::to_string));
            row.push(t.reward.to_string());
            row.push(if t.done { "1" } else { "0" }.to_string());
            out.write_record(&row)?;
        }
        out.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(meta: DatasetMeta, r: R, origin: &Path) -> Result<Dataset> {
        let spec = meta.env.spec();
        let n = spec.state_dim;
        let m = spec.action_space.encoded_dim();
        let bad = |msg: String| Error::Format { path: origin.to_path_buf(), msg };
        let mut rdr = csv::Reader::from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != Self::header(&spec) {
            return Err(bad(format!("unexpected header {header:?}")));
        }
        let mut transitions = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(format!("row {}: {e}", line + 1)))?;
            if vals.len() != 2 * n + m + 2 {
                return Err(bad(format!("row {} has {} fields", line + 1, vals.len())));
            }
            let action = Action::decode(&spec.action_space, &vals[n..n + m])
                .map_err(|e| bad(format!("row {}: {e}", line + 1)))?;
            transitions.push(Transition {
                state: vals[..n].to_vec(),
                action,
                next_state: vals[n + m..2 * n + m].to_vec(),
                reward: vals[2 * n + m],
                done: vals[2 * n + m + 1] != 0.0,
                step: 0,
            });
        }
        if transitions.len() != meta.count {
            return Err(bad(format!("metadata says {} rows, file has {}", meta.count, transitions.len())));
        }
        Ok(Dataset { meta, transitions })
    }

    /// Writes `<path>` and its `.meta.json` sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))?;
        let meta_path = meta_path(path);
        let json = serde_json::to_string_pretty(&self.meta)?;
        fs::write(&meta_path, json + "\n").map_err(|e| Error::io(&meta_path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Dataset> {
        let meta_path = meta_path(path);
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: DatasetMeta = serde_json::from_str(&text)?;
        if meta.format_version != FORMAT_VERSION {
            return Err(Error::Format {
                path: meta_path,
                msg: format!("unsupported format version {}", meta.format_version),
            });
        }
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Dataset::read_csv(meta, std::io::BufReader::new(file), path)
    }
}

/// Sidecar path for a dataset CSV: `foo.csv` -> `foo.meta.json`.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    csv_path.with_file_name(format!("{stem}.meta.json"))
}
