//! Attribution records and their CSV and JSON forms.

use serde::{Deserialize, Serialize};
use sverl::{Attribution, TabularMdp};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evaluation {
    Linear,
    MonteCarlo { episodes: u64, seed: u64 },
}

/// One explained state (or the aggregate over states) with everything
/// needed to reproduce it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub domain: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_seed: Option<u64>,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_features: Option<Vec<String>>,
    pub features: Vec<String>,
    pub occupancy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weighting: Option<String>,
    pub evaluation: Evaluation,
    pub attribution: Attribution,
    /// Coalitions whose conditional fell back to a uniform mixture.
    pub fallback_coalitions: usize,
    /// Coalitions (or sampled episodes) cut off at the episode cap.
    pub truncated: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub records: Vec<Record>,
}

impl Report {
    pub fn to_json(&self) -> CliResult<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> CliResult<Self> {
        serde_json::from_str(s).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Columns: state id, state features, optional action, feature, φ, SE.
    pub fn to_csv(&self, mdp: &TabularMdp) -> CliResult<String> {
        let with_action = self.records.iter().any(|r| r.action.is_some());
        let mut header = vec!["state".to_string()];
        header.extend(mdp.features().iter().map(|f| f.name.clone()));
        if with_action {
            header.push("action".into());
        }
        header.extend(["feature", "phi", "se"].map(String::from));
        let mut rows = vec![header];
        for r in &self.records {
            let mut prefix = vec![r.state.map_or("*".to_string(), |s| s.to_string())];
            match &r.state_features {
                Some(labels) => prefix.extend(labels.iter().cloned()),
                None => prefix.extend(std::iter::repeat_n("*".to_string(), mdp.n_features())),
            }
            if with_action {
                prefix.push(r.action.clone().unwrap_or_default());
            }
            for (i, phi) in r.attribution.phi.iter().enumerate() {
                let mut row = prefix.clone();
                row.push(r.features[i].clone());
                row.push(phi.to_string());
                row.push(r.attribution.standard_error.as_ref().map_or(String::new(), |se| se[i].to_string()));
                rows.push(row);
            }
        }
        write_csv(&rows)
    }
}

pub fn write_csv(rows: &[Vec<String>]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(row).map_err(|e| CliError::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
}

/// Divide by the largest magnitude so values fall in `[-1, 1]`.
pub fn normalize(values: &[f64]) -> Vec<f64> {
    let m = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m == 0.0 {
        values.to_vec()
    } else {
        values.iter().map(|v| v / m).collect()
    }
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = mid;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks for ties. `None` when
/// either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let (mut va, mut vb) = (0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        None
    } else {
        Some(cov / (va * vb).sqrt())
    }
}
