//! JSON model/schedule/report serialization and CSV trace writers.
//!
//! Matrices are nested row-major arrays. Unknown JSON fields are rejected.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::detect::{Condition, DetectabilityReport, Thresholds, Verdict};
use crate::error::{Error, Result};
use crate::identify::{IdentifiabilityMatrix, IdentificationHistory};
use crate::model::{NominalModel, SensorSchedule, SensorSpec, SimulationTrace};

/// Row-major nested-array form of a matrix.
pub type Rows = Vec<Vec<f64>>;

pub fn mat_to_rows(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Convert nested rows to a matrix; `cols` disambiguates empty matrices.
pub fn rows_to_mat(rows: &Rows, cols: Option<usize>) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = match rows.first() {
        Some(row) => row.len(),
        None => cols.unwrap_or(0),
    };
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::InvalidModel("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorFile {
    pub c: Rows,
    pub d_u: Rows,
    pub d_a: BTreeMap<String, Rows>,
    pub d_w: Rows,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub a_hat: Rows,
    pub b_u_hat: Rows,
    pub sensors: Vec<SensorFile>,
    pub b_a: BTreeMap<String, Rows>,
    pub b_w: Rows,
    pub e_hat: Rows,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleFile {
    pub frame_period: usize,
    pub samples: Vec<Vec<usize>>,
}

impl ModelFile {
    pub fn from_model(m: &NominalModel) -> ModelFile {
        ModelFile {
            a_hat: mat_to_rows(&m.a_hat),
            b_u_hat: mat_to_rows(&m.b_u_hat),
            sensors: m
                .sensors
                .iter()
                .map(|s| SensorFile {
                    c: mat_to_rows(&s.c),
                    d_u: mat_to_rows(&s.d_u),
                    d_a: s.d_a.iter().map(|(k, v)| (k.clone(), mat_to_rows(v))).collect(),
                    d_w: mat_to_rows(&s.d_w),
                })
                .collect(),
            b_a: m.b_a.iter().map(|(k, v)| (k.clone(), mat_to_rows(v))).collect(),
            b_w: mat_to_rows(&m.b_w),
            e_hat: mat_to_rows(&m.e_hat),
        }
    }

    pub fn into_model(&self) -> Result<NominalModel> {
        let a_hat = rows_to_mat(&self.a_hat, None)?;
        let n = a_hat.nrows();
        let b_u_hat = rows_to_mat(&self.b_u_hat, Some(0))?;
        let m_u = b_u_hat.ncols();
        let b_w = rows_to_mat(&self.b_w, Some(0))?;
        let m_w = b_w.ncols();
        let mut b_a = BTreeMap::new();
        let mut m_a = None;
        for (k, v) in &self.b_a {
            let m = rows_to_mat(v, Some(0))?;
            m_a.get_or_insert(m.ncols());
            b_a.insert(k.clone(), m);
        }
        let m_a = m_a.unwrap_or(0);
        let sensors = self
            .sensors
            .iter()
            .map(|s| -> Result<SensorSpec> {
                let c = rows_to_mat(&s.c, Some(n))?;
                let p = c.nrows();
                let mut d_a = BTreeMap::new();
                for (k, v) in &s.d_a {
                    let m = if v.is_empty() {
                        DMatrix::zeros(p, m_a)
                    } else {
                        rows_to_mat(v, Some(m_a))?
                    };
                    d_a.insert(k.clone(), m);
                }
                Ok(SensorSpec {
                    c,
                    d_u: if s.d_u.is_empty() {
                        DMatrix::zeros(p, m_u)
                    } else {
                        rows_to_mat(&s.d_u, Some(m_u))?
                    },
                    d_a,
                    d_w: if s.d_w.is_empty() {
                        DMatrix::zeros(p, m_w)
                    } else {
                        rows_to_mat(&s.d_w, Some(m_w))?
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let model = NominalModel {
            a_hat,
            b_u_hat,
            sensors,
            b_a,
            b_w,
            e_hat: rows_to_mat(&self.e_hat, Some(n))?,
        };
        model.validate(false)?;
        Ok(model)
    }
}

pub fn load_model(path: &Path) -> Result<NominalModel> {
    let text = std::fs::read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&text)?;
    file.into_model()
}

pub fn save_model(path: &Path, model: &NominalModel) -> Result<()> {
    let file = ModelFile::from_model(model);
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

pub fn load_schedule(path: &Path) -> Result<SensorSchedule> {
    let text = std::fs::read_to_string(path)?;
    let file: ScheduleFile = serde_json::from_str(&text)?;
    Ok(SensorSchedule {
        frame_period: file.frame_period,
        samples: file.samples,
    })
}

pub fn save_schedule(path: &Path, schedule: &SensorSchedule) -> Result<()> {
    let file = ScheduleFile {
        frame_period: schedule.frame_period,
        samples: schedule.samples.clone(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

/// Write a simulation trace as CSV: one row per frame with the norms first,
/// then every component of y, z, x, a, w under stable column names.
pub fn write_trace_csv(path: &Path, trace: &SimulationTrace) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    let dim = |vs: &Vec<nalgebra::DVector<f64>>| vs.first().map(|v| v.len()).unwrap_or(0);
    let (py, pz, pn, pa, pw) = (
        dim(&trace.ys),
        dim(&trace.zs),
        dim(&trace.xs),
        dim(&trace.attacks),
        dim(&trace.noises),
    );
    let mut header = vec!["frame".to_string(), "y_norm".into(), "z_norm".into()];
    for (name, d) in [("y", py), ("z", pz), ("x", pn), ("a", pa), ("w", pw)] {
        for i in 0..d {
            header.push(format!("{name}{i}"));
        }
    }
    writeln!(f, "{}", header.join(","))?;
    for k in 0..trace.ys.len() {
        let mut row = vec![
            k.to_string(),
            format!("{:.17e}", trace.ys[k].norm()),
            format!("{:.17e}", trace.zs[k].norm()),
        ];
        let mut push_vec = |v: &nalgebra::DVector<f64>| {
            for i in 0..v.len() {
                row.push(format!("{:.17e}", v[i]));
            }
        };
        push_vec(&trace.ys[k]);
        push_vec(&trace.zs[k]);
        push_vec(&trace.xs[k]);
        if let Some(a) = trace.attacks.get(k) {
            push_vec(a);
        }
        if let Some(w) = trace.noises.get(k) {
            push_vec(w);
        }
        writeln!(f, "{}", row.join(","))?;
    }
    Ok(())
}

/// Identification history CSV: frame, residual per mode, then 0/1 estimate
/// set membership per mode.
pub fn write_identification_csv(path: &Path, hist: &IdentificationHistory) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    let mut header = vec!["frame".to_string()];
    for q in &hist.modes {
        header.push(format!("r_{q}"));
    }
    for q in &hist.modes {
        header.push(format!("in_{q}"));
    }
    writeln!(f, "{}", header.join(","))?;
    for step in &hist.steps {
        let mut row = vec![step.frame.to_string()];
        for r in &step.residuals {
            row.push(format!("{:.17e}", r));
        }
        for a in &step.active {
            row.push(if *a { "1" } else { "0" }.to_string());
        }
        writeln!(f, "{}", row.join(","))?;
    }
    Ok(())
}

/// Matrix-as-CSV dump (one row per line), for debug output of subspace
/// bases and lifted blocks.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.17e}", m[(i, j)])).collect();
        writeln!(f, "{}", row.join(","))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectabilityReportFile {
    pub mode: String,
    pub verdict: String,
    pub condition: Option<String>,
    pub lambda: Option<(f64, f64)>,
    pub v_dim: usize,
    pub v_star_dim: usize,
    pub borderline: bool,
    pub low_confidence: bool,
}

pub fn report_to_file(report: &DetectabilityReport) -> DetectabilityReportFile {
    let lambda = match &report.witness {
        Some(crate::detect::Witness::Eigenspace(w)) => Some((w.lambda.re, w.lambda.im)),
        _ => None,
    };
    DetectabilityReportFile {
        mode: report.mode.clone(),
        verdict: match report.verdict {
            Verdict::Detectable => "detectable".into(),
            Verdict::Vulnerable => "vulnerable".into(),
        },
        condition: report.triggered_condition.map(|c| {
            match c {
                Condition::I => "i",
                Condition::II => "ii",
                Condition::III => "iii",
            }
            .to_string()
        }),
        lambda,
        v_dim: report.geo.v.dim(),
        v_star_dim: report.geo.v_star.dim(),
        borderline: report.borderline,
        low_confidence: report.low_confidence,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdsFile {
    pub epsilon: f64,
    pub delta_noise: f64,
    pub delta_bar: f64,
    pub delta: f64,
    pub truncation_horizon: usize,
    pub margin: f64,
}

pub fn thresholds_to_file(t: &Thresholds) -> ThresholdsFile {
    ThresholdsFile {
        epsilon: t.epsilon,
        delta_noise: t.delta_noise,
        delta_bar: t.delta_bar,
        delta: t.delta,
        truncation_horizon: t.truncation_horizon,
        margin: t.margin,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentifiabilityFile {
    pub modes: Vec<String>,
    pub identifiable: bool,
    pub pairs: Vec<PairVerdictFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairVerdictFile {
    pub p: String,
    pub q: String,
    pub discernible: bool,
    pub f_n_norm: f64,
    pub ev_norm: f64,
}

pub fn identifiability_to_file(m: &IdentifiabilityMatrix) -> IdentifiabilityFile {
    IdentifiabilityFile {
        modes: m.modes.clone(),
        identifiable: m.identifiable,
        pairs: m
            .pairwise
            .iter()
            .map(|p| PairVerdictFile {
                p: p.p.clone(),
                q: p.q.clone(),
                discernible: p.discernible,
                f_n_norm: p.f_n_norm,
                ev_norm: p.ev_norm,
            })
            .collect(),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}
