//! BIC matrices and model/family selection reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::bms::{family_evidence, rfx_bms, BmsResult, EvidenceMatrix, Family};
use super::{delta_bic_class, Evidence};
use crate::error::{Error, Result};
use crate::metacontrol::ModelConfig;

/// Participant × model BIC values; `None` marks a missing fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicMatrix {
    pub participants: Vec<String>,
    pub models: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl BicMatrix {
    /// Build from (participant, model, bic) cells; rows and columns sorted.
    pub fn from_cells<'a>(cells: impl IntoIterator<Item = (&'a str, &'a str, f64)>) -> Self {
        let mut map: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        let mut models = std::collections::BTreeSet::new();
        for (p, m, b) in cells {
            models.insert(m.to_string());
            map.entry(p.to_string()).or_default().insert(m.to_string(), b);
        }
        let models: Vec<String> = models.into_iter().collect();
        let values = map
            .values()
            .map(|row| models.iter().map(|m| row.get(m).copied()).collect())
            .collect();
        BicMatrix { participants: map.into_keys().collect(), models, values }
    }

    /// Wide CSV: `participant,<model>...`, empty cells for holes.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["participant".to_string()];
        header.extend(self.models.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for (p, row) in self.participants.iter().zip(&self.values) {
            let mut rec = vec![p.clone()];
            rec.extend(row.iter().map(|v| v.map_or(String::new(), |x| format!("{x}"))));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let headers = r.headers().map_err(|e| Error::InvalidInput(e.to_string()))?.clone();
        if headers.get(0) != Some("participant") {
            return Err(Error::InvalidInput("first BIC column must be `participant`".into()));
        }
        let models: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut participants = Vec::new();
        let mut values = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::AtLine { line: i + 2, source: Box::new(Error::InvalidInput(e.to_string())) })?;
            participants.push(rec.get(0).unwrap_or_default().to_string());
            let row = rec
                .iter()
                .skip(1)
                .map(|c| {
                    let c = c.trim();
                    if c.is_empty() {
                        Ok(None)
                    } else {
                        c.parse::<f64>().map(Some).map_err(|_| Error::AtLine {
                            line: i + 2,
                            source: Box::new(Error::InvalidInput(format!("`{c}` is not a number"))),
                        })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            values.push(row);
        }
        Ok(BicMatrix { participants, models, values })
    }

    /// Missing (participant, model) cells.
    pub fn holes(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (p, row) in self.participants.iter().zip(&self.values) {
            for (m, v) in self.models.iter().zip(row) {
                if v.is_none() {
                    out.push((p.clone(), m.clone()));
                }
            }
        }
        out
    }

    /// Dense BIC values, or an error listing every hole.
    pub fn complete(&self) -> Result<Vec<Vec<f64>>> {
        let holes = self.holes();
        if !holes.is_empty() {
            let list: Vec<String> = holes.iter().map(|(p, m)| format!("{p}/{m}")).collect();
            return Err(Error::InvalidInput(format!("{} missing BIC cells: {}", holes.len(), list.join(", "))));
        }
        Ok(self
            .values
            .iter()
            .map(|r| r.iter().map(|v| v.expect("no holes")).collect())
            .collect())
    }

    pub fn evidence(&self) -> Result<EvidenceMatrix> {
        EvidenceMatrix::from_bic(self.participants.clone(), self.models.clone(), &self.complete()?)
    }
}

/// Families by base mechanism, in first-appearance order. Ids that are not
/// grid models form their own family.
pub fn partition_by_base(models: &[String]) -> Vec<Family> {
    let mut fams: Vec<Family> = Vec::new();
    for (j, m) in models.iter().enumerate() {
        let name = m
            .parse::<ModelConfig>()
            .map(|c| c.base.as_str().to_string())
            .unwrap_or_else(|_| m.clone());
        match fams.iter_mut().find(|f| f.name == name) {
            Some(f) => f.members.push(j),
            None => fams.push(Family { name, members: vec![j] }),
        }
    }
    fams
}

pub fn partition_singletons(models: &[String]) -> Vec<Family> {
    models
        .iter()
        .enumerate()
        .map(|(j, m)| Family { name: m.clone(), members: vec![j] })
        .collect()
}

/// Families from a name → model-ids map.
pub fn partition_from_map(models: &[String], map: &BTreeMap<String, Vec<String>>) -> Result<Vec<Family>> {
    map.iter()
        .map(|(name, ids)| {
            let members = ids
                .iter()
                .map(|id| {
                    models
                        .iter()
                        .position(|m| m == id)
                        .ok_or_else(|| Error::UnknownModel(id.clone()))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Family { name: name.clone(), members })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BmsRow {
    pub name: String,
    pub r: f64,
    pub phi: f64,
    pub protected_phi: f64,
    pub mean_bic: f64,
}

/// Per-participant ΔBIC labels between the best model without and the best
/// model with pseudo-rewards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PrEvidenceCounts {
    pub substantial_against_pr: usize,
    pub substantial_for_pr: usize,
    pub inconclusive: usize,
}

pub fn pr_evidence_counts(models: &[String], bic: &[Vec<f64>]) -> Option<PrEvidenceCounts> {
    let configs: Vec<Option<ModelConfig>> = models.iter().map(|m| m.parse().ok()).collect();
    let cols = |pr: bool| -> Vec<usize> {
        configs
            .iter()
            .enumerate()
            .filter(|(_, c)| c.as_ref().is_some_and(|c| c.base.extensible() && c.pseudo_rewards == pr))
            .map(|(j, _)| j)
            .collect()
    };
    let (without, with) = (cols(false), cols(true));
    if without.is_empty() || with.is_empty() {
        return None;
    }
    let mut counts = PrEvidenceCounts::default();
    for row in bic {
        let best = |js: &[usize]| js.iter().map(|&j| row[j]).fold(f64::INFINITY, f64::min);
        match delta_bic_class(best(&without), best(&with)) {
            Evidence::SubstantialForA => counts.substantial_against_pr += 1,
            Evidence::SubstantialForB => counts.substantial_for_pr += 1,
            Evidence::Inconclusive => counts.inconclusive += 1,
        }
    }
    Some(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub n_participants: usize,
    pub models: Vec<BmsRow>,
    pub families: Vec<BmsRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pr_evidence: Option<PrEvidenceCounts>,
    pub mc_samples: usize,
    pub converged: bool,
}

fn rows(res: &BmsResult, mean_bic: &[f64]) -> Vec<BmsRow> {
    (0..res.labels.len())
        .map(|j| BmsRow {
            name: res.labels[j].clone(),
            r: res.r[j],
            phi: res.phi[j],
            protected_phi: res.protected_phi[j],
            mean_bic: mean_bic[j],
        })
        .collect()
}

fn bms_or_single(e: &EvidenceMatrix, mc: usize, seed: u64) -> Result<BmsResult> {
    if e.k() == 1 {
        return Ok(BmsResult {
            labels: e.models.clone(),
            alpha: vec![1.0 + e.n() as f64],
            r: vec![1.0],
            phi: vec![1.0],
            protected_phi: vec![1.0],
            bor: 0.0,
            mc_samples: 0,
            iterations: 0,
            converged: true,
        });
    }
    rfx_bms(e, mc, seed)
}

/// Model- and family-level BMS over a complete BIC matrix.
pub fn select(m: &BicMatrix, partition: &[Family], mc_samples: usize, seed: u64) -> Result<SelectionReport> {
    let bic = m.complete()?;
    let e = m.evidence()?;
    let n = bic.len().max(1) as f64;
    let mean_bic: Vec<f64> = (0..m.models.len()).map(|j| bic.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let model_res = bms_or_single(&e, mc_samples, seed)?;
    let fe = family_evidence(&e, partition)?;
    let fam_res = bms_or_single(&fe, mc_samples, seed)?;
    let fam_bic: Vec<f64> = partition
        .iter()
        .map(|f| f.members.iter().map(|&j| mean_bic[j]).sum::<f64>() / f.members.len() as f64)
        .collect();
    Ok(SelectionReport {
        n_participants: m.participants.len(),
        models: rows(&model_res, &mean_bic),
        families: rows(&fam_res, &fam_bic),
        pr_evidence: pr_evidence_counts(&m.models, &bic),
        mc_samples,
        converged: model_res.converged && fam_res.converged,
    })
}

impl SelectionReport {
    /// Plain-text tables: families, then models.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let table = |s: &mut String, title: &str, rows: &[BmsRow]| {
            let w = rows.iter().map(|r| r.name.len()).max().unwrap_or(5).max(5);
            let _ = writeln!(s, "{title} (N = {})", self.n_participants);
            let _ = writeln!(s, "{:<w$}  {:>6}  {:>6}  {:>6}  {:>10}", "model", "r", "phi", "pxp", "mean BIC");
            for r in rows {
                let _ = writeln!(
                    s,
                    "{:<w$}  {:>6.3}  {:>6.3}  {:>6.3}  {:>10.2}",
                    r.name, r.r, r.phi, r.protected_phi, r.mean_bic
                );
            }
            s.push('\n');
        };
        table(&mut s, "Family-level BMS", &self.families);
        table(&mut s, "Model-level BMS", &self.models);
        if let Some(c) = self.pr_evidence {
            let _ = writeln!(
                s,
                "Pseudo-reward evidence (|ΔBIC| > 3.2): against {}, for {}, inconclusive {}",
                c.substantial_against_pr, c.substantial_for_pr, c.inconclusive
            );
        }
        if !self.converged {
            s.push_str("WARNING: BMS did not converge within the iteration cap\n");
        }
        s
    }
}
