//! `report.json`: the verdict plus whatever produced it — a single comparison
//! matrix, or the full protocol record (level sequences, rates, weights,
//! audit records and the message log). Versioned by `schema_version`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use vecstab_core::certify::{
    AgentMessage, CertRecord, CertificationReport, ComparisonMatrix, LevelSequence, Mode, Phase, Phase1Outcome,
    Provenance, Round, Stage, Verdict,
};

use crate::config::RunMode;
use crate::{Error, Result};

pub const SCHEMA_VERSION: &str = "vecstab-report/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportFile {
    pub schema_version: String,
    pub mode: RunMode,
    pub ids: Vec<usize>,
    pub v0: Vec<f64>,
    pub verdict: VerdictFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub single: Option<SingleFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<ProtocolFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VerdictFile {
    ExponentiallyStable,
    ConvergesToLimitSet { limit: Vec<f64> },
    Inconclusive { reason: String },
}

impl From<&Verdict> for VerdictFile {
    fn from(v: &Verdict) -> Self {
        match v {
            Verdict::ExponentiallyStable => VerdictFile::ExponentiallyStable,
            Verdict::ConvergesToLimitSet(g) => VerdictFile::ConvergesToLimitSet { limit: g.clone() },
            Verdict::Inconclusive(r) => VerdictFile::Inconclusive { reason: r.clone() },
        }
    }
}

impl From<&VerdictFile> for Verdict {
    fn from(v: &VerdictFile) -> Self {
        match v {
            VerdictFile::ExponentiallyStable => Verdict::ExponentiallyStable,
            VerdictFile::ConvergesToLimitSet { limit } => Verdict::ConvergesToLimitSet(limit.clone()),
            VerdictFile::Inconclusive { reason } => Verdict::Inconclusive(reason.clone()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProvenanceFile {
    Traditional,
    Direct,
    PowerTransform,
    Diagonal { k: usize },
}

impl From<Provenance> for ProvenanceFile {
    fn from(p: Provenance) -> Self {
        match p {
            Provenance::Traditional => ProvenanceFile::Traditional,
            Provenance::Direct => ProvenanceFile::Direct,
            Provenance::PowerTransform => ProvenanceFile::PowerTransform,
            Provenance::DiagonalK(k) => ProvenanceFile::Diagonal { k },
        }
    }
}

impl From<ProvenanceFile> for Provenance {
    fn from(p: ProvenanceFile) -> Self {
        match p {
            ProvenanceFile::Traditional => Provenance::Traditional,
            ProvenanceFile::Direct => Provenance::Direct,
            ProvenanceFile::PowerTransform => Provenance::PowerTransform,
            ProvenanceFile::Diagonal { k } => Provenance::DiagonalK(k),
        }
    }
}

/// A single comparison matrix with its Gershgorin row checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingleFile {
    pub provenance: ProvenanceFile,
    pub domain_gammas: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub row_sums: Vec<f64>,
    pub hurwitz_rows: Vec<bool>,
    pub invariance_rows: Vec<bool>,
    pub eigen_hurwitz: bool,
    pub certificates: Vec<CertRecordFile>,
}

impl SingleFile {
    pub fn matrix(&self, ids: &[usize]) -> Result<ComparisonMatrix> {
        let m = ids.len();
        if self.a.len() != m || self.a.iter().any(|r| r.len() != m) || self.domain_gammas.len() != m {
            return Err(Error::Format(format!("single comparison matrix is not {m}x{m}")));
        }
        Ok(ComparisonMatrix {
            ids: ids.to_vec(),
            a: DMatrix::from_fn(m, m, |i, j| self.a[i][j]),
            domain_gammas: self.domain_gammas.clone(),
            provenance: self.provenance.into(),
        })
    }
}

pub fn matrix_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows()).map(|i| a.row(i).iter().copied().collect()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageFile {
    Direct,
    Phase1,
    Phase1Edge,
    Phase2,
    Phase2Edge,
    Closure,
}

impl From<Stage> for StageFile {
    fn from(s: Stage) -> Self {
        match s {
            Stage::Direct => StageFile::Direct,
            Stage::Phase1 => StageFile::Phase1,
            Stage::Phase1Edge => StageFile::Phase1Edge,
            Stage::Phase2 => StageFile::Phase2,
            Stage::Phase2Edge => StageFile::Phase2Edge,
            Stage::Closure => StageFile::Closure,
        }
    }
}

impl From<StageFile> for Stage {
    fn from(s: StageFile) -> Self {
        match s {
            StageFile::Direct => Stage::Direct,
            StageFile::Phase1 => Stage::Phase1,
            StageFile::Phase1Edge => Stage::Phase1Edge,
            StageFile::Phase2 => Stage::Phase2,
            StageFile::Phase2Edge => Stage::Phase2Edge,
            StageFile::Closure => Stage::Closure,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertRecordFile {
    pub stage: StageFile,
    pub round: usize,
    pub agent: usize,
    pub edge: Option<usize>,
    pub coeff_residual: f64,
    /// `null` when the certificate has no Gram matrix at all.
    pub min_eigenvalue: Option<f64>,
    pub sample_violation: Option<f64>,
}

impl From<&CertRecord> for CertRecordFile {
    fn from(r: &CertRecord) -> Self {
        CertRecordFile {
            stage: r.stage.into(),
            round: r.round,
            agent: r.agent,
            edge: r.edge,
            coeff_residual: r.coeff_residual,
            min_eigenvalue: r.min_eigenvalue.is_finite().then_some(r.min_eigenvalue),
            sample_violation: r.sample_violation,
        }
    }
}

impl From<&CertRecordFile> for CertRecord {
    fn from(r: &CertRecordFile) -> Self {
        CertRecord {
            stage: r.stage.into(),
            round: r.round,
            agent: r.agent,
            edge: r.edge,
            coeff_residual: r.coeff_residual,
            min_eigenvalue: r.min_eigenvalue.unwrap_or(f64::INFINITY),
            sample_violation: r.sample_violation,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolMode {
    Sequential,
    Parallel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Phase1File {
    Envelope { gamma: Vec<f64> },
    Escaped { id: usize },
    Unknown { id: usize },
    NoConvergence,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseFile {
    Envelope,
    Contraction,
    Closure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MessageFile {
    pub sender: usize,
    pub phase: PhaseFile,
    pub round: usize,
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceFile {
    pub envelope: Vec<Vec<f64>>,
    pub levels: Vec<Vec<f64>>,
    pub rates: Vec<Vec<Option<f64>>>,
    pub weights: Vec<Vec<Vec<(usize, f64)>>>,
    pub limit: Vec<f64>,
    pub terminal: Vec<Vec<(usize, f64)>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolFile {
    pub mode: ProtocolMode,
    pub phase1: Option<Phase1File>,
    pub sequence: SequenceFile,
    pub certificates: Vec<CertRecordFile>,
    pub messages: Vec<MessageFile>,
    pub locality_violations: usize,
    pub solves: usize,
    pub diagnostics: Vec<String>,
}

impl ProtocolFile {
    pub fn from_report(r: &CertificationReport) -> Self {
        let s = &r.sequence;
        ProtocolFile {
            mode: match r.mode {
                Mode::Sequential => ProtocolMode::Sequential,
                Mode::Parallel => ProtocolMode::Parallel,
            },
            phase1: r.phase1.as_ref().map(|p| match p {
                Phase1Outcome::Envelope(g) => Phase1File::Envelope { gamma: g.clone() },
                Phase1Outcome::Escaped { id } => Phase1File::Escaped { id: *id },
                Phase1Outcome::Unknown { id } => Phase1File::Unknown { id: *id },
                Phase1Outcome::NoConvergence => Phase1File::NoConvergence,
            }),
            sequence: SequenceFile {
                envelope: s.envelope.clone(),
                levels: s.levels.clone(),
                rates: s.rates.clone(),
                weights: s.weights.clone(),
                limit: s.limit.clone(),
                terminal: s.terminal.clone(),
            },
            certificates: r.certificates.iter().map(Into::into).collect(),
            messages: r
                .messages
                .iter()
                .map(|m| MessageFile {
                    sender: m.sender,
                    phase: match m.round.phase {
                        Phase::Envelope => PhaseFile::Envelope,
                        Phase::Contraction => PhaseFile::Contraction,
                        Phase::Closure => PhaseFile::Closure,
                    },
                    round: m.round.index,
                    gamma: m.gamma,
                })
                .collect(),
            locality_violations: r.locality_violations,
            solves: r.solves,
            diagnostics: r.diagnostics.clone(),
        }
    }

    pub fn to_report(&self, ids: &[usize], v0: &[f64], verdict: Verdict) -> CertificationReport {
        let s = &self.sequence;
        CertificationReport {
            mode: match self.mode {
                ProtocolMode::Sequential => Mode::Sequential,
                ProtocolMode::Parallel => Mode::Parallel,
            },
            v0: v0.to_vec(),
            phase1: self.phase1.as_ref().map(|p| match p {
                Phase1File::Envelope { gamma } => Phase1Outcome::Envelope(gamma.clone()),
                Phase1File::Escaped { id } => Phase1Outcome::Escaped { id: *id },
                Phase1File::Unknown { id } => Phase1Outcome::Unknown { id: *id },
                Phase1File::NoConvergence => Phase1Outcome::NoConvergence,
            }),
            sequence: LevelSequence {
                ids: ids.to_vec(),
                envelope: s.envelope.clone(),
                levels: s.levels.clone(),
                rates: s.rates.clone(),
                weights: s.weights.clone(),
                limit: s.limit.clone(),
                terminal: s.terminal.clone(),
            },
            verdict,
            certificates: self.certificates.iter().map(Into::into).collect(),
            messages: self
                .messages
                .iter()
                .map(|m| AgentMessage {
                    sender: m.sender,
                    round: Round {
                        phase: match m.phase {
                            PhaseFile::Envelope => Phase::Envelope,
                            PhaseFile::Contraction => Phase::Contraction,
                            PhaseFile::Closure => Phase::Closure,
                        },
                        index: m.round,
                    },
                    gamma: m.gamma,
                })
                .collect(),
            locality_violations: self.locality_violations,
            solves: self.solves,
            diagnostics: self.diagnostics.clone(),
        }
    }
}

impl ReportFile {
    pub fn from_protocol(mode: RunMode, r: &CertificationReport) -> Self {
        ReportFile {
            schema_version: SCHEMA_VERSION.to_string(),
            mode,
            ids: r.sequence.ids.clone(),
            v0: r.v0.clone(),
            verdict: (&r.verdict).into(),
            single: None,
            protocol: Some(ProtocolFile::from_report(r)),
        }
    }

    pub fn verdict(&self) -> Verdict {
        (&self.verdict).into()
    }

    pub fn protocol_report(&self) -> Option<CertificationReport> {
        self.protocol.as_ref().map(|p| p.to_report(&self.ids, &self.v0, self.verdict()))
    }

    /// The envelope the verdict covers: Phase-1 levels, or the single
    /// matrix's domain.
    pub fn envelope(&self) -> Option<Vec<f64>> {
        if let Some(Phase1File::Envelope { gamma }) = self.protocol.as_ref().and_then(|p| p.phase1.as_ref()) {
            return Some(gamma.clone());
        }
        self.single.as_ref().map(|s| s.domain_gammas.clone())
    }

    pub fn check_version(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "report schema `{}`, expected `{SCHEMA_VERSION}`",
                self.schema_version
            )));
        }
        Ok(())
    }
}
