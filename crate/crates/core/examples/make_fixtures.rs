//! Regenerates the CSV fixtures under `tests/fixtures`.
//!
//! `cargo run --release --example make_fixtures`

use std::fs::File;
use std::path::Path;

use rdperm::data::write_frame;
use rdperm::simlab::{generate, CovariateDgp, DgpSpec, EffectSpec, Manipulation, RunningDist};

const ANALYSIS_SEED: u64 = 20_250_101;
const HEAP_SEED: u64 = 20_250_102;

/// Control outcomes do not trend in `r`, so the constant outcome model is
/// correctly specified and the effect is detectable at this sample size.
fn analysis_spec() -> DgpSpec {
    let mut spec = DgpSpec::linear(2000, 1.0, EffectSpec::Constant { tau: 0.25 });
    spec.yc_poly = vec![2.0];
    spec.covariates = vec![
        CovariateDgp {
            name: "x1".into(),
            poly: vec![0.0, 1.0],
            hinges: vec![],
            noise_sd: 1.0,
            binary: false,
        },
        CovariateDgp {
            name: "x2".into(),
            poly: vec![0.0, 0.5],
            hinges: vec![],
            noise_sd: 0.0,
            binary: true,
        },
    ];
    spec
}

fn heap_spec() -> DgpSpec {
    let mut spec = DgpSpec::linear(2000, 1.0, EffectSpec::Constant { tau: 0.25 });
    spec.running = RunningDist::DiscreteGrid {
        min: -1.0,
        max: 1.0,
        step: 0.01,
        weights: None,
    };
    spec.manipulation = Some(Manipulation::HeapAt {
        value: 0.0,
        fraction: 0.05,
        source_value: -0.3,
    });
    spec.covariates = vec![CovariateDgp {
        name: "x1".into(),
        poly: vec![0.0, 1.0],
        hinges: vec![],
        noise_sd: 1.0,
        binary: false,
    }];
    spec
}

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    std::fs::create_dir_all(&dir).expect("create fixture directory");
    for (name, spec, seed) in [
        ("analysis.csv", analysis_spec(), ANALYSIS_SEED),
        ("heap.csv", heap_spec(), HEAP_SEED),
    ] {
        let frame = generate(&spec, seed).expect("generate fixture");
        let file = File::create(dir.join(name)).expect("create fixture file");
        write_frame(&frame, file).expect("write fixture");
        println!("wrote {name} (n = {})", frame.len());
    }
}
