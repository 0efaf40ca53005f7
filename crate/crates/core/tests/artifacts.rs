mod common;

use barrier_core::artifact::{load_json, save_json, BarrierPairArtifact, EstimatorArtifact};
use barrier_core::model::UncertainPlant;
use barrier_core::synthesis::verify_barrier_pair;
use barrier_core::Error;
use common::fixture;

#[test]
fn barrier_pair_survives_json() {
    let f = fixture();
    let dir = std::env::temp_dir().join(format!("bpair-artifacts-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bp.json");
    save_json(&path, &BarrierPairArtifact::new(&f.plant, &f.pair, None)).unwrap();
    let back = load_json::<BarrierPairArtifact>(&path)
        .unwrap()
        .to_pair(&f.plant)
        .unwrap();
    assert_eq!(back.p, f.pair.p);
    assert_eq!(back.controller, f.pair.controller);
    verify_barrier_pair(&f.plant, &f.spec, &back, 1e-9).unwrap();

    let est = dir.join("est.json");
    save_json(&est, &EstimatorArtifact::new(&f.plant, &f.design)).unwrap();
    let d = load_json::<EstimatorArtifact>(&est)
        .unwrap()
        .to_design(&f.plant)
        .unwrap();
    assert_eq!(d, f.design);
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn tampered_artifacts_are_rejected() {
    let f = fixture();
    let art = BarrierPairArtifact::new(&f.plant, &f.pair, None);
    let other = UncertainPlant::mass_spring(1.0, 10.0, 2.0, 0.05).unwrap();
    assert!(matches!(
        art.to_pair(&other),
        Err(Error::ArtifactMismatch(_))
    ));
    let mut bad = art.clone();
    bad.x.pop();
    assert!(matches!(
        bad.to_pair(&f.plant),
        Err(Error::ArtifactMismatch(_))
    ));
    let mut bad = art;
    bad.c_k[0] = f64::NAN;
    assert!(bad.to_pair(&f.plant).is_err());
}
