//! File formats: CSV tables, sensitivity reports, Pareto data, manifest.
//!
//! CSV files are comma separated with a header row and LF line endings.
//! Reals are written with 17 significant digits so they read back exactly.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigSpace, Configuration};
use crate::sensitivity::SensitivityReport;
use crate::sim::{Trace, TraceSet};
use crate::tradeoff::ParetoFront;

pub const CONFIGS_FILE: &str = "configs.csv";
pub const CAMPAIGN_FILE: &str = "campaign.csv";
pub const TRACES_FILE: &str = "traces.csv";
pub const SENSITIVITY_JSON: &str = "sensitivity.json";
pub const SENSITIVITY_MD: &str = "sensitivity.md";
pub const PARETO_CSV: &str = "pareto.csv";
pub const PARETO_DAT: &str = "pareto.dat";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl OutputError {
    fn io(path: &Path, source: io::Error) -> Self {
        OutputError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn csv(path: &Path, source: csv::Error) -> Self {
        OutputError::Csv {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, OutputError> {
    let file = fs::File::create(path).map_err(|e| OutputError::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn write_rows(path: &Path, header: Vec<String>, rows: impl IntoIterator<Item = Vec<String>>) -> Result<usize, OutputError> {
    let mut w = csv_writer(path)?;
    w.write_record(&header).map_err(|e| OutputError::csv(path, e))?;
    let mut n = 0;
    for row in rows {
        w.write_record(&row).map_err(|e| OutputError::csv(path, e))?;
        n += 1;
    }
    w.flush().map_err(|e| OutputError::io(path, e))?;
    Ok(n)
}

fn param_cells(space: &ConfigSpace, c: &Configuration) -> Vec<String> {
    space.decode(c).iter().map(|v| v.to_string()).collect()
}

fn param_header(space: &ConfigSpace) -> Vec<String> {
    space.parameters().iter().map(|p| p.name.clone()).collect()
}

/// `config_id` plus one column per parameter. Returns the data row count.
pub fn write_configs_csv(path: &Path, space: &ConfigSpace, configs: &[Configuration]) -> Result<usize, OutputError> {
    let mut header = vec!["config_id".to_string()];
    header.extend(param_header(space));
    write_rows(
        path,
        header,
        configs.iter().map(|c| {
            let mut row = vec![c.id.to_string()];
            row.extend(param_cells(space, c));
            row
        }),
    )
}

/// Reads the config ids back from a configs file.
pub fn read_configs_csv(path: &Path, space: &ConfigSpace) -> Result<Vec<Configuration>, OutputError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| OutputError::csv(path, e))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| OutputError::csv(path, e))?;
        let id = parse_id(path, rec.get(0))?;
        out.push(space.config_from_id(id).map_err(|e| OutputError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

fn parse_id(path: &Path, cell: Option<&str>) -> Result<u64, OutputError> {
    cell.and_then(|s| s.parse().ok()).ok_or_else(|| OutputError::Format {
        path: path.to_path_buf(),
        message: "bad config_id".into(),
    })
}

/// One row per configuration: parameters, mean and std of every metric,
/// run count and stopping branch.
pub fn write_campaign_csv(
    path: &Path,
    space: &ConfigSpace,
    metric_ids: &[String],
    results: &[TraceSet],
) -> Result<usize, OutputError> {
    let mut header = vec!["config_id".to_string()];
    header.extend(param_header(space));
    for id in metric_ids {
        header.push(format!("{id}_mean"));
        header.push(format!("{id}_std"));
    }
    header.push("m".into());
    header.push("stop".into());
    let rows = results.iter().map(|ts| {
        let c = space.config_from_id(ts.config_id).expect("result belongs to space");
        let mut row = vec![ts.config_id.to_string()];
        row.extend(param_cells(space, &c));
        for s in &ts.stats {
            row.push(fmt_real(s.mean));
            row.push(fmt_real(s.std));
        }
        row.push(ts.m.to_string());
        row.push(ts.stop.as_str().to_string());
        row
    });
    write_rows(path, header, rows)
}

/// Campaign means read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignTable {
    pub config_ids: Vec<u64>,
    pub metric_ids: Vec<String>,
    /// `means[i][r]`: metric `i`, row `r`.
    pub means: Vec<Vec<f64>>,
}

impl CampaignTable {
    pub fn column(&self, metric: &str) -> Option<&[f64]> {
        self.metric_ids.iter().position(|m| m == metric).map(|i| self.means[i].as_slice())
    }
}

pub fn read_campaign_csv(path: &Path) -> Result<CampaignTable, OutputError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| OutputError::csv(path, e))?;
    let header = r.headers().map_err(|e| OutputError::csv(path, e))?.clone();
    let mean_cols: Vec<(usize, String)> = header
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.strip_suffix("_mean").map(|m| (i, m.to_string())))
        .collect();
    let mut table = CampaignTable {
        config_ids: Vec::new(),
        metric_ids: mean_cols.iter().map(|(_, m)| m.clone()).collect(),
        means: vec![Vec::new(); mean_cols.len()],
    };
    for rec in r.records() {
        let rec = rec.map_err(|e| OutputError::csv(path, e))?;
        table.config_ids.push(parse_id(path, rec.get(0))?);
        for (slot, (i, m)) in table.means.iter_mut().zip(&mean_cols) {
            let v: f64 = rec.get(*i).and_then(|s| s.parse().ok()).ok_or_else(|| OutputError::Format {
                path: path.to_path_buf(),
                message: format!("bad value in column {m}_mean"),
            })?;
            slot.push(v);
        }
    }
    Ok(table)
}

/// One row per (run, step, group) of the retained traces.
pub fn write_traces_csv(path: &Path, traces: &[&Trace]) -> Result<usize, OutputError> {
    let header = [
        "config_id",
        "run",
        "step",
        "group",
        "population",
        "mean_feature",
        "selected",
        "total",
        "positives",
        "true_positives",
        "utility",
    ]
    .map(String::from)
    .to_vec();
    let rows = traces.iter().flat_map(|t| {
        t.snapshots.iter().flat_map(move |s| {
            s.groups.iter().map(move |g| {
                vec![
                    t.config_id.to_string(),
                    t.run.to_string(),
                    s.step.to_string(),
                    g.label.clone(),
                    g.population.to_string(),
                    fmt_real(g.mean_feature),
                    g.selected.to_string(),
                    g.total.to_string(),
                    g.positives.to_string(),
                    g.true_positives.to_string(),
                    fmt_real(s.utility),
                ]
            })
        })
    });
    write_rows(path, header, rows)
}

pub fn significance_stars(p: Option<f64>) -> &'static str {
    match p {
        Some(p) if p < 0.001 => "***",
        Some(p) if p < 0.01 => "**",
        Some(p) if p < 0.05 => "*",
        _ => "",
    }
}

fn fmt_sci(x: f64) -> String {
    format!("{x:.2E}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| format!("{v:.3e}"))
}

/// Human-readable tables: one per response, sorted by sum of squares.
pub fn render_sensitivity_markdown(reports: &[SensitivityReport]) -> String {
    let mut s = String::new();
    for rep in reports {
        s.push_str(&format!("## {}\n\n", rep.response));
        s.push_str("| rank | term | dummy | coefficient | Sum Sq. | df | F | p | eta² | class |\n");
        s.push_str("|---:|---|---|---:|---:|---:|---:|---:|---:|---|\n");
        for t in &rep.rows {
            let r = &t.row;
            let dummies: Vec<&str> = r.coefficients.iter().map(|c| c.dummy.as_str()).collect();
            let coefs: Vec<String> = r.coefficients.iter().map(|c| fmt_sci(c.value)).collect();
            s.push_str(&format!(
                "| {} | {} | {} | {}{} | {} | {} | {} | {} | {:.2}% | {} |\n",
                t.rank,
                r.term,
                dummies.join(", "),
                coefs.join(", "),
                significance_stars(r.p_value),
                fmt_sci(r.sum_sq),
                r.df,
                fmt_opt(r.f_stat),
                fmt_opt(r.p_value),
                100.0 * r.eta_squared,
                r.effect.as_str(),
            ));
        }
        s.push('\n');
        match rep.r_squared {
            Some(r2) => s.push_str(&format!("R² = {r2:.4}\n")),
            None => s.push_str("R² = NA\n"),
        }
        s.push_str(&format!(
            "rows = {}, residual df = {}\n",
            rep.n_rows, rep.df_resid
        ));
        if !rep.dropped.is_empty() {
            s.push_str(&format!("dropped constant columns: {}\n", rep.dropped.join(", ")));
        }
        if !rep.aliased.is_empty() {
            s.push_str(&format!("aliased columns: {}\n", rep.aliased.join(", ")));
        }
        s.push_str("\nSignificance: *** p < .001, ** p < .01, * p < .05\n\n");
    }
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<(), OutputError> {
    fs::write(path, text).map_err(|e| OutputError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), OutputError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| OutputError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, OutputError> {
    let text = fs::read_to_string(path).map_err(|e| OutputError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| OutputError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Front members with decoded parameters, raw objectives and radar values.
pub fn write_pareto_csv(
    path: &Path,
    space: &ConfigSpace,
    front: &ParetoFront,
    scaled: &[Vec<f64>],
) -> Result<usize, OutputError> {
    let mut header = vec!["config_id".to_string()];
    header.extend(param_header(space));
    header.extend(front.specs.iter().map(|s| s.metric.clone()));
    header.extend(front.specs.iter().map(|s| format!("{}_scaled", s.metric)));
    let rows = front.members.iter().zip(scaled).map(|(m, sc)| {
        let c = space.config_from_id(m.id).expect("member belongs to space");
        let mut row = vec![m.id.to_string()];
        row.extend(param_cells(space, &c));
        row.extend(m.objectives.iter().map(|&x| fmt_real(x)));
        row.extend(sc.iter().map(|&x| fmt_real(x)));
        row
    });
    write_rows(path, header, rows)
}

/// Whitespace-separated columns with a `#` header, for gnuplot.
pub fn write_pareto_dat(path: &Path, front: &ParetoFront, scaled: &[Vec<f64>]) -> Result<usize, OutputError> {
    let file = fs::File::create(path).map_err(|e| OutputError::io(path, e))?;
    let mut w = io::BufWriter::new(file);
    let io_err = |e| OutputError::io(path, e);
    write!(w, "# config_id").map_err(io_err)?;
    for s in &front.specs {
        write!(w, " {}", s.metric).map_err(io_err)?;
    }
    for s in &front.specs {
        write!(w, " {}_scaled", s.metric).map_err(io_err)?;
    }
    writeln!(w).map_err(io_err)?;
    for (m, sc) in front.members.iter().zip(scaled) {
        write!(w, "{}", m.id).map_err(io_err)?;
        for x in m.objectives.iter().chain(sc) {
            write!(w, " {}", fmt_real(*x)).map_err(io_err)?;
        }
        writeln!(w).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(front.members.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Completed,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub name: String,
    /// Data rows (header excluded) for tables, `None` for other files.
    pub rows: Option<usize>,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub started_at: String,
    pub finished_at: String,
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub failed_configs: Vec<u64>,
    pub stages: Vec<StageRecord>,
    pub files: Vec<FileRecord>,
}

impl RunManifest {
    pub fn new(config_hash: &str, started_at: String) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash.to_string(),
            finished_at: started_at.clone(),
            started_at,
            complete: false,
            failed_stage: None,
            error: None,
            failed_configs: Vec::new(),
            stages: Vec::new(),
            files: Vec::new(),
        }
    }

    /// Replaces any earlier record of the same stage.
    pub fn set_stage(&mut self, name: &str, status: StageStatus, note: Option<String>) {
        self.stages.retain(|s| s.name != name);
        self.stages.push(StageRecord {
            name: name.to_string(),
            status,
            note,
        });
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    /// Hashes `dir/name` and records it, replacing an earlier entry.
    pub fn record_file(&mut self, dir: &Path, name: &str, rows: Option<usize>) -> Result<(), OutputError> {
        let sha256 = file_sha256(&dir.join(name))?;
        self.files.retain(|f| f.name != name);
        self.files.push(FileRecord {
            name: name.to_string(),
            rows,
            sha256,
        });
        self.files.sort_by(|a, b| a.name.cmp(&b.name));
        Ok(())
    }
}

pub fn file_sha256(path: &Path) -> Result<String, OutputError> {
    let bytes = fs::read(path).map_err(|e| OutputError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Data rows in a CSV file (header excluded).
pub fn count_csv_rows(path: &Path) -> Result<usize, OutputError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| OutputError::csv(path, e))?;
    let mut n = 0;
    for rec in r.records() {
        rec.map_err(|e| OutputError::csv(path, e))?;
        n += 1;
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ParamKind, ParameterDef};
    use crate::sensitivity::analyze;

    #[test]
    fn stars() {
        assert_eq!(significance_stars(Some(0.0005)), "***");
        assert_eq!(significance_stars(Some(0.005)), "**");
        assert_eq!(significance_stars(Some(0.03)), "*");
        assert_eq!(significance_stars(Some(0.2)), "");
        assert_eq!(significance_stars(None), "");
    }

    #[test]
    fn reals_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-17, 6.02214076e23, f64::MIN_POSITIVE] {
            let s = fmt_real(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }

    fn space() -> ConfigSpace {
        ConfigSpace::new(vec![
            ParameterDef::numeric("a", ParamKind::System, &[1.0, 2.0, 3.0]),
            ParameterDef::categorical("b", ParamKind::Environmental, &["x", "y"]),
        ])
        .unwrap()
    }

    #[test]
    fn configs_round_trip_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let s = space();
        let cs = crate::config::enumerate_configs(&s).unwrap();
        let p = dir.path().join(CONFIGS_FILE);
        let n = write_configs_csv(&p, &s, &cs).unwrap();
        assert_eq!(n, 6);
        assert_eq!(count_csv_rows(&p).unwrap(), 6);
        assert_eq!(read_configs_csv(&p, &s).unwrap(), cs);
        let text = fs::read_to_string(&p).unwrap();
        assert!(!text.contains('\r'));
        assert!(text.starts_with("config_id,a,b\n"));
    }

    #[test]
    fn report_has_r_squared() {
        let s = space();
        let cs = crate::config::enumerate_configs(&s).unwrap();
        let y: Vec<f64> = cs.iter().map(|c| c.assignments[0] as f64 + 0.1 * (c.id % 4) as f64).collect();
        let rep = analyze(&s, &cs, &y, "resp").unwrap();
        let md = render_sensitivity_markdown(&[rep]);
        assert!(md.contains("R² = "), "{md}");
        assert!(md.contains("| term |"));
    }

    #[test]
    fn manifest_replaces_entries() {
        let dir = tempfile::tempdir().unwrap();
        write_text(&dir.path().join("x.txt"), "one").unwrap();
        let mut m = RunManifest::new("h", "t".into());
        m.record_file(dir.path(), "x.txt", None).unwrap();
        write_text(&dir.path().join("x.txt"), "two").unwrap();
        m.record_file(dir.path(), "x.txt", None).unwrap();
        assert_eq!(m.files.len(), 1);
        assert_eq!(m.files[0].sha256, hex::encode(Sha256::digest(b"two")));
        m.set_stage("a", StageStatus::Failed, None);
        m.set_stage("a", StageStatus::Completed, None);
        assert_eq!(m.stages.len(), 1);
    }

    #[test]
    fn unwritable_dir_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("missing").join("f.csv");
        assert!(write_configs_csv(&p, &space(), &[]).is_err());
    }
}
