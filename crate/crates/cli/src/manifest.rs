use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use bsretract_core::retraction::PipelineConfig;

/// Numeric settings of a run. Absent fields did not apply to the command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub seed: u64,
    pub sl: bool,
    pub tol: f64,
    pub max_iter: usize,
    pub rep_tol: f64,
    pub snap_tol: f64,
    pub normality_tol: f64,
    pub num_samples: usize,
}

impl Parameters {
    pub fn new(seed: u64, cfg: &PipelineConfig) -> Self {
        Parameters {
            p: None,
            q: None,
            n: None,
            seed,
            sl: cfg.flow.sl_mode,
            tol: cfg.flow.tol,
            max_iter: cfg.flow.max_iter,
            rep_tol: cfg.rep_tol,
            snap_tol: cfg.snap_tol,
            normality_tol: cfg.normality_tol,
            num_samples: cfg.num_samples,
        }
    }

    pub fn with_shape(mut self, p: i64, q: i64, n: Option<usize>) -> Self {
        self.p = Some(p);
        self.q = Some(q);
        self.n = n;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub exit_code: i32,
    pub summary: String,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: Parameters,
    pub input: Option<String>,
    pub outputs: Vec<String>,
    /// Hash over the command, its parameters and the input bytes.
    pub input_hash: String,
    pub outcome: Option<Outcome>,
}

impl RunManifest {
    pub fn new(command: &str, parameters: Parameters, input: Option<String>, input_bytes: &[u8]) -> Self {
        let mut canonical = serde_json::to_vec(&(command, &parameters)).expect("parameters serialize");
        canonical.push(b'\n');
        canonical.extend_from_slice(input_bytes);
        RunManifest {
            command: command.to_string(),
            parameters,
            input,
            outputs: Vec::new(),
            input_hash: artifact_hash(&canonical),
            outcome: None,
        }
    }

    pub fn add_output(&mut self, path: &std::path::Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn finish(&mut self, exit: crate::Exit, summary: impl Into<String>) {
        self.outcome = Some(Outcome {
            exit_code: exit.code(),
            summary: summary.into(),
        });
    }

    /// Hash of the manifest itself, used to reference it from reports.
    pub fn hash(&self) -> String {
        artifact_hash(&serde_json::to_vec(self).expect("manifest serializes"))
    }
}

/// Git-style object hash: SHA-256 over `"blob <len>\0"` followed by the bytes.
pub fn artifact_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}
