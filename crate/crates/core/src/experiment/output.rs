//! Result files: matrix, group and ranking CSVs, the JSON bundle, SVG
//! heatmaps and state scatter exports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::eval::{
    aggregate_groups, average_by_trainer, clamp_scores, welch_t_test, ClampedCell, EvalMatrix, GroupSummary,
    SamplerGroup, SamplerId,
};
use crate::surrogate::Family;

pub const RESULTS_FORMAT_VERSION: u32 = 1;
pub const BUNDLE_FILE: &str = "results.json";
/// Significance level separating the best group from the rest.
pub const GROUP_ALPHA: f64 = 0.001;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupTest {
    pub group: SamplerGroup,
    pub best: SamplerGroup,
    /// `None` when the statistic is infinite (both samples constant).
    pub t: Option<f64>,
    pub df: Option<f64>,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyResults {
    pub family: Family,
    pub cells: Vec<ClampedCell>,
    pub groups: Vec<GroupSummary>,
    pub ranked: Vec<(SamplerId, f64)>,
    pub group_tests: Vec<GroupTest>,
    /// Groups significantly better than every other group.
    pub best_groups: Vec<SamplerGroup>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultsBundle {
    pub format_version: u32,
    pub config: ExperimentConfig,
    pub matrix: EvalMatrix,
    pub families: Vec<FamilyResults>,
    pub missing_cells: usize,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Welch tests of every group against the one with the highest mean. The
/// best group is marked only when all those tests reject at `GROUP_ALPHA`.
pub fn test_groups(groups: &[GroupSummary]) -> Result<(Vec<GroupTest>, Vec<SamplerGroup>)> {
    let Some(best) = groups.iter().max_by(|a, b| a.mean.total_cmp(&b.mean)) else {
        return Ok((Vec::new(), Vec::new()));
    };
    let mut tests = Vec::new();
    for g in groups.iter().filter(|g| g.group != best.group) {
        if g.values.len() < 2 || best.values.len() < 2 {
            continue;
        }
        let w = welch_t_test(&best.values, &g.values)?;
        tests.push(GroupTest { group: g.group, best: best.group, t: finite(w.t), df: finite(w.df), p: w.p });
    }
    let compared = groups.len() > 1 && tests.len() == groups.len() - 1;
    let marked = if compared && tests.iter().all(|t| t.p < GROUP_ALPHA) { vec![best.group] } else { Vec::new() };
    Ok((tests, marked))
}

pub fn family_results(matrix: &EvalMatrix, family: Family) -> Result<FamilyResults> {
    let groups = aggregate_groups(matrix, family, None)?;
    let (group_tests, best_groups) = test_groups(&groups)?;
    Ok(FamilyResults {
        family,
        cells: clamp_scores(matrix, family, -1.0, 1.0)?,
        ranked: average_by_trainer(matrix, family),
        groups,
        group_tests,
        best_groups,
    })
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Rows are test datasets, columns training samplers; values are
/// seed-averaged R² (empty when missing).
pub fn matrix_csv(matrix: &EvalMatrix, family: Family) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["test".to_string()];
    header.extend(matrix.samplers.iter().map(|s| s.id().to_string()));
    w.write_record(&header)?;
    for &test in &matrix.samplers {
        let mut row = vec![test.id().to_string()];
        row.extend(matrix.samplers.iter().map(|&train| opt(matrix.summary(family, train, test).mean)));
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))
}

pub fn groups_csv(res: &FamilyResults) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["group", "mean", "std", "cells", "p_vs_best", "best"])?;
    for g in &res.groups {
        let p = res.group_tests.iter().find(|t| t.group == g.group).map(|t| t.p);
        let best = res.best_groups.contains(&g.group);
        w.write_record([
            g.group.label().to_string(),
            g.mean.to_string(),
            g.std.to_string(),
            g.values.len().to_string(),
            opt(p),
            (best as u8).to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))
}

pub fn ranked_csv(res: &FamilyResults) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["rank", "sampler", "group", "mean_r2"])?;
    for (i, (s, v)) in res.ranked.iter().enumerate() {
        w.write_record([(i + 1).to_string(), s.id().to_string(), s.group().label().to_string(), v.to_string()])?;
    }
    w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// First two state coordinates of every transition.
pub fn scatter_csv(data: &Dataset) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["s0", "s1"])?;
    for t in &data.transitions {
        w.write_record([t.state[0].to_string(), t.state.get(1).copied().unwrap_or(0.0).to_string()])?;
    }
    w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Diverging colour for a score in `[-1, 1]`: red below zero, blue above.
fn colour(v: f64) -> String {
    let (r, g, b) = if v < 0.0 { (178.0, 24.0, 43.0) } else { (33.0, 102.0, 172.0) };
    let a = v.abs().min(1.0);
    let mix = |c: f64| (255.0 + (c - 255.0) * a).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(r), mix(g), mix(b))
}

pub fn heatmap_svg(res: &FamilyResults, samplers: &[SamplerId], title: &str) -> String {
    const CELL: usize = 56;
    const LEFT: usize = 70;
    const TOP: usize = 30;
    let n = samplers.len();
    let (width, height) = (LEFT + n * CELL + 10, TOP + n * CELL + 40);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<text x="{LEFT}" y="18" font-size="13">{title}</text>"#);
    let bottom = TOP + n * CELL;
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">train</text>"#, LEFT + n * CELL / 2, bottom + 32);
    let _ = writeln!(s, r#"<text x="12" y="{}" text-anchor="middle">test</text>"#, TOP + n * CELL / 2);
    for (i, sampler) in samplers.iter().enumerate() {
        let c = i * CELL + CELL / 2;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{sampler}</text>"#, LEFT + c, bottom + 14);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end" dominant-baseline="middle">{sampler}</text>"#,
            LEFT - 6,
            TOP + c
        );
    }
    for cell in &res.cells {
        let (Some(col), Some(row)) =
            (samplers.iter().position(|&x| x == cell.train), samplers.iter().position(|&x| x == cell.test))
        else {
            continue;
        };
        let (x, y) = (LEFT + col * CELL, TOP + row * CELL);
        let (fill, label) = match cell.clamped {
            Some(v) => (colour(v), format!("{v:.2}")),
            None => ("#bbbbbb".to_string(), "n/a".to_string()),
        };
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{fill}" stroke="white"/><text x="{}" y="{}" text-anchor="middle" dominant-baseline="middle">{label}</text>"#,
            x + CELL / 2,
            y + CELL / 2
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Collects every output file in memory so the caller can write them in
/// one pass.
pub fn render(bundle: &ResultsBundle, scatter: &[(SamplerId, &Dataset)]) -> Result<Vec<(PathBuf, Vec<u8>)>> {
    let mut files = Vec::new();
    for res in &bundle.families {
        let f = res.family.id();
        files.push((PathBuf::from(format!("matrix_{f}.csv")), matrix_csv(&bundle.matrix, res.family)?));
        files.push((PathBuf::from(format!("groups_{f}.csv")), groups_csv(res)?));
        files.push((PathBuf::from(format!("ranked_{f}.csv")), ranked_csv(res)?));
        let title = format!("{} {} R² (clamped to [-1, 1])", bundle.config.env, f);
        files.push((
            PathBuf::from(format!("heatmap_{f}.svg")),
            heatmap_svg(res, &bundle.matrix.samplers, &title).into_bytes(),
        ));
    }
    for (sampler, data) in scatter {
        files.push((PathBuf::from(format!("scatter_{sampler}.csv")), scatter_csv(data)?));
    }
    let mut json = serde_json::to_vec_pretty(bundle)?;
    json.push(b'\n');
    files.push((PathBuf::from(BUNDLE_FILE), json));
    Ok(files)
}

/// Writes `files` under `dir`, each through a temporary sibling renamed
/// into place.
pub fn write_all(dir: &Path, files: &[(PathBuf, Vec<u8>)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, bytes) in files {
        let path = dir.join(name);
        let tmp = dir.join(format!(".{}.tmp", name.display()));
        fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

pub fn load_bundle(dir: &Path) -> Result<ResultsBundle> {
    let path = dir.join(BUNDLE_FILE);
    if !path.exists() {
        return Err(Error::Format { path, msg: "no results bundle found; run an experiment first".into() });
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let bundle: ResultsBundle = serde_json::from_str(&text)?;
    if bundle.format_version != RESULTS_FORMAT_VERSION {
        return Err(Error::Format { path, msg: format!("unsupported results version {}", bundle.format_version) });
    }
    Ok(bundle)
}

/// Console tables: ranked per-sampler averages and group summaries, with
/// `*` on a group that is significantly better than all others.
pub fn report(bundle: &ResultsBundle) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "environment {}, {} samples, seeds {:?}",
        bundle.config.env, bundle.config.samples, bundle.matrix.seeds
    );
    for res in &bundle.families {
        let _ = writeln!(s, "\n[{}] mean R² over all test datasets", res.family);
        for (i, (sampler, v)) in res.ranked.iter().enumerate() {
            let _ = writeln!(s, "{:>3}  {:<8} {:<12} {:>12.4}", i + 1, sampler.id(), sampler.group().label(), v);
        }
        let _ = writeln!(s, "\n[{}] groups (* = better than every other group, Welch p < {GROUP_ALPHA})", res.family);
        let _ = writeln!(s, "     {:<12} {:>12} {:>10} {:>10}", "group", "mean", "std", "p vs best");
        for g in &res.groups {
            let mark = if res.best_groups.contains(&g.group) { "*" } else { " " };
            let p = res
                .group_tests
                .iter()
                .find(|t| t.group == g.group)
                .map_or_else(|| "-".to_string(), |t| format!("{:.2e}", t.p));
            let _ = writeln!(s, "  {mark}  {:<12} {:>12.4} {:>10.4} {:>10}", g.group.label(), g.mean, g.std, p);
        }
    }
    if bundle.missing_cells > 0 {
        let _ = writeln!(s, "\n{} cell(s) could not be computed; see {BUNDLE_FILE}", bundle.missing_cells);
    }
    s
}
