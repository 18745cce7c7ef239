//! Suite manifests: named kernel cases with data seeds and the expected
//! SHA-256 of each case's output range.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{run_case, CaseReport, KernelSpec};
use crate::chip::ChipConfig;
use crate::SimError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteCase {
    pub name: String,
    pub spec: KernelSpec,
    pub seed: u64,
    /// Digest of the output range; absent for cases checked another way.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_digest: Option<String>,
}

impl SuiteCase {
    /// Fail a passing report whose output digest differs from the recorded
    /// one. Only meaningful when the case ran with its own seed.
    pub fn check_digest(&self, report: &mut CaseReport) {
        if !report.passed {
            return;
        }
        if let (Some(want), Some(got)) = (&self.expected_digest, &report.digest) {
            if want != got {
                report.passed = false;
                report.detail = format!("output digest {got} differs from recorded {want}");
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub digest_algorithm: String,
    pub cases: Vec<SuiteCase>,
}

impl SuiteManifest {
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Input(format!("{}: {e}", path.display())))?;
        let m: SuiteManifest =
            serde_json::from_str(&text).map_err(|e| SimError::Input(format!("{}: {e}", path.display())))?;
        if m.digest_algorithm != "sha256" {
            return Err(SimError::Input(format!("unsupported digest algorithm {:?}", m.digest_algorithm)));
        }
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    /// Run every case. With `seed_override` the data are re-generated from
    /// that seed and the recorded digests are not compared; the oracle
    /// check still applies.
    pub fn run(&self, cfg: &ChipConfig, seed_override: Option<u64>, workers: usize) -> Result<Vec<CaseReport>, SimError> {
        (0..self.cases.len()).map(|i| self.run_one(i, cfg, seed_override, workers)).collect()
    }

    /// Run case `index` alone, as [`run`](Self::run) would.
    pub fn run_one(
        &self,
        index: usize,
        cfg: &ChipConfig,
        seed_override: Option<u64>,
        workers: usize,
    ) -> Result<CaseReport, SimError> {
        let c = &self.cases[index];
        let case = c.spec.build(cfg, seed_override.unwrap_or(c.seed))?;
        let mut report = run_case(cfg, &case, workers)?;
        report.name = c.name.clone();
        if seed_override.is_none() {
            c.check_digest(&mut report);
        }
        Ok(report)
    }

    pub fn find(&self, name: &str) -> Option<&SuiteCase> {
        self.cases.iter().find(|c| c.name == name)
    }

    /// Fill in the digests from a run (used when regenerating a manifest).
    pub fn record_digests(&mut self, cfg: &ChipConfig, workers: usize) -> Result<(), SimError> {
        for c in &mut self.cases {
            let case = c.spec.build(cfg, c.seed)?;
            let report = run_case(cfg, &case, workers)?;
            if !report.passed {
                return Err(SimError::Validation(format!("{}: {}", c.name, report.detail)));
            }
            c.expected_digest = report.digest;
        }
        Ok(())
    }
}

/// The standard suite for the one-city configuration, without digests.
pub fn default_suite() -> SuiteManifest {
    use super::{DgemmParams, LitmusKind, LitmusParams, MatrixInit, VecaddParams, VecaddVariant, VectorInit};
    let mut cases = Vec::new();
    let mut add = |name: &str, spec: KernelSpec, seed: u64| {
        cases.push(SuiteCase { name: name.into(), spec, seed, expected_digest: None });
    };
    for (variant, name) in [(VecaddVariant::SingleGroup, "vecadd-single-1024"), (VecaddVariant::DualGroup, "vecadd-dual-1024")] {
        add(name, KernelSpec::Vecadd(VecaddParams { n: 1024, variant, pes: 16, pe_stride: 1, init: VectorInit::Random }), 7);
    }
    add(
        "vecadd-dual-latency",
        KernelSpec::Vecadd(VecaddParams {
            n: 16384,
            variant: VecaddVariant::DualGroup,
            pes: 4,
            pe_stride: 4,
            init: VectorInit::Random,
        }),
        7,
    );
    let dgemm = |n: usize, block: usize, init: MatrixInit| DgemmParams {
        m: n,
        n,
        k: n,
        block_rows: block,
        block_cols: block,
        threads_per_pe: 4,
        init,
    };
    add("dgemm-32", KernelSpec::Dgemm(dgemm(32, 8, MatrixInit::Random)), 42);
    add("dgemm-64", KernelSpec::Dgemm(dgemm(64, 16, MatrixInit::Random)), 42);
    add("dgemm-64-identity", KernelSpec::Dgemm(dgemm(64, 16, MatrixInit::IdentityA)), 3);
    for kind in LitmusKind::ALL {
        add(kind.name(), KernelSpec::Litmus(LitmusParams { kind }), 0);
    }
    SuiteManifest { digest_algorithm: "sha256".into(), cases }
}
