//! Rewrite the checked-in presets, suite manifest and kernel sources:
//! `cargo run -p sc3sim --example regenerate -- <repo root>`.

use std::path::PathBuf;

use sc3sim::chip::ChipConfig;
use sc3sim::kernels::dgemm::dgemm_source;
use sc3sim::kernels::litmus::litmus_source;
use sc3sim::kernels::manifest::default_suite;
use sc3sim::kernels::vecadd::vecadd_source;
use sc3sim::kernels::{KernelSpec, LitmusKind, VecaddVariant};

fn main() {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    let write = |rel: &str, text: String| {
        let path = root.join(rel);
        std::fs::write(&path, text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        println!("wrote {}", path.display());
    };
    for cfg in [ChipConfig::sc3(), ChipConfig::sc2(), ChipConfig::one_city(), ChipConfig::calibration_800mhz()] {
        write(&format!("configs/{}.json", cfg.name), cfg.to_json() + "\n");
    }
    let mut suite = default_suite();
    suite.record_digests(&ChipConfig::one_city(), 1).expect("suite passes on city1");
    write("configs/suite.json", suite.to_json() + "\n");
    write("kernels/vecadd-single.s", vecadd_source(VecaddVariant::SingleGroup));
    write("kernels/vecadd-dual.s", vecadd_source(VecaddVariant::DualGroup));
    for kind in LitmusKind::ALL {
        write(&format!("kernels/litmus-{}.s", kind.name()), litmus_source(kind));
    }
    // The DGEMM code depends on the shape, not on the data.
    let mut seen = Vec::new();
    for case in &suite.cases {
        if let KernelSpec::Dgemm(p) = &case.spec {
            let source = dgemm_source(p).expect("valid suite parameters");
            if !seen.contains(&source) {
                write(&format!("kernels/{}.s", case.name), source.clone());
                seen.push(source);
            }
        }
    }
}
