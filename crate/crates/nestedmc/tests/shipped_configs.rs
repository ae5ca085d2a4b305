//! The JSON configs shipped under `configs/` must stay loadable and keep
//! the experiment shapes the reports and acceptance checks are built
//! around, so each one is pinned here field by field.

use std::path::PathBuf;

use nestedmc::engine::{Anchor, Basis, Method, ReferenceStrategy};
use nestedmc::harness::{ExampleId, ExperimentConfig};
use nestedmc::risk::RiskMeasureSpec;

fn load(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name);
    ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn barrier_config_keeps_its_published_shape() {
    let cfg = load("barrier.json");
    assert_eq!(cfg.example, ExampleId::Barrier);
    assert_eq!(cfg.methods, vec![Method::Sn, Method::Sr, Method::Nsr, Method::Regression]);
    assert_eq!((cfg.n, cfg.m, cfg.trials), (760, 1316, 50));
    let reference = cfg.reference.as_ref().unwrap();
    assert_eq!(reference.plan, ReferenceStrategy::EquidistantBlocks { blocks: 10 });
    assert_eq!(reference.anchor, Anchor::RightEndpoint);
    let regression = cfg.regression.as_ref().unwrap();
    assert_eq!(regression.points, 10);
    assert_eq!(
        regression.basis,
        Basis::HingeQuadratic { knots: vec![91.0, 100.0, 104.5] }
    );
    assert_eq!(cfg.bins, 5);
    assert_eq!(cfg.risk_measure, RiskMeasureSpec::ExpectedExcess { c: 0.3608 });
    let oracle = cfg.oracle.as_ref().unwrap();
    assert!(oracle.pricing_paths >= 1, "barrier pricing needs a path budget");
    assert_ne!(oracle.seed, cfg.seed);
}

#[test]
fn asian_config_keeps_its_published_shape() {
    let cfg = load("asian.json");
    assert_eq!(cfg.example, ExampleId::Asian);
    assert_eq!(cfg.methods, vec![Method::Sn, Method::Sr, Method::Regression]);
    assert_eq!((cfg.n, cfg.m, cfg.trials), (1000, 1000, 50));
    let reference = cfg.reference.as_ref().unwrap();
    assert_eq!(reference.plan, ReferenceStrategy::EquidistantBlocks { blocks: 10 });
    assert_eq!(reference.anchor, Anchor::Midpoint);
    let regression = cfg.regression.as_ref().unwrap();
    assert_eq!(regression.points, 50);
    assert_eq!(regression.points % 5, 0, "points must split evenly across the five assets");
    assert_eq!(regression.basis, Basis::Polynomial { degree: 5, scale: 100.0 });
    assert_eq!(cfg.risk_measure, RiskMeasureSpec::ExpectedExcess { c: 114.8151 });
    assert_ne!(cfg.oracle.as_ref().unwrap().seed, cfg.seed);
}

#[test]
fn gmwb_config_keeps_its_published_shape() {
    let cfg = load("gmwb.json");
    assert_eq!(cfg.example, ExampleId::Gmwb);
    assert_eq!(cfg.methods, vec![Method::Sn, Method::Sr]);
    assert_eq!((cfg.n, cfg.m, cfg.trials), (1000, 1000, 50));
    let reference = cfg.reference.as_ref().unwrap();
    assert_eq!(reference.plan, ReferenceStrategy::RatioLadder { ratio: 1.1 });
    assert_eq!(reference.anchor, Anchor::MaxStart);
    assert_eq!(cfg.risk_measure, RiskMeasureSpec::Var { alpha: 0.7 });
    assert_ne!(cfg.oracle.as_ref().unwrap().seed, cfg.seed);
}

#[test]
fn toy_config_keeps_its_published_shape() {
    let cfg = load("toy.json");
    assert_eq!(cfg.example, ExampleId::Toy);
    assert_eq!(cfg.methods, vec![Method::Sn, Method::Sr]);
    assert_eq!((cfg.n, cfg.m), (100, 1000));
    assert!(cfg.trials >= 2, "variance reporting needs at least two trials");
    assert_eq!(cfg.risk_measure, RiskMeasureSpec::Mean);
    assert!(cfg.oracle.is_none(), "the synthetic model's ground truth is closed form");
    assert!(cfg.reference.is_none(), "the synthetic run builds its own one-reference plan");
}
