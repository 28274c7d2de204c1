use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use polytraverse::network::{class_of, load_network, NetworkFormat, ReluNetwork};
use polytraverse::oracle::{grid_points, random_network};
use polytraverse::polytope::BoundedRegion;
use polytraverse::verifiers::{
    counterfactual, output_range, robustness_check, verify_output_property, CounterfactualSpec, CounterfactualStatus,
    Inequality, Norm, PropertyMode, PropertySpec, RobustnessSpec, Verdict, VerifyOptions,
};

fn fixture(name: &str) -> ReluNetwork {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name);
    load_network(&std::fs::read(path).unwrap(), NetworkFormat::Json).unwrap()
}

fn square() -> BoundedRegion {
    BoundedRegion::boxed(vec![-1.0; 2], vec![1.0; 2]).unwrap()
}

#[test]
fn fixture_files_give_the_documented_answers() {
    let opts = VerifyOptions::default();
    let r = output_range(&fixture("identity.json"), &square(), 0, &opts).unwrap();
    assert_eq!((r.min, r.max), (0.0, 2.0));

    let two = fixture("two_output.json");
    let ok = robustness_check(&two, &RobustnessSpec::new(vec![0.3, 0.0], 0.1), &opts).unwrap();
    assert!(ok.verdict.is_verified());
    let bad = robustness_check(&two, &RobustnessSpec::new(vec![0.3, 0.0], 0.5), &opts).unwrap();
    assert!(bad.verdict.is_violated());

    let spec = PropertySpec::from_json(
        &std::fs::read_to_string(std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/o1_le_o2.json"))
            .unwrap(),
    )
    .unwrap();
    assert!(verify_output_property(&two, &spec, &opts)
        .unwrap()
        .verdict
        .is_violated());
}

#[test]
fn robustness_agrees_with_a_grid_of_the_ball() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let opts = VerifyOptions::default();
    for _ in 0..20 {
        let net = random_network(&mut rng, 2, &[6, 4], 3);
        let x0 = vec![rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
        let eps = rng.gen_range(0.05..0.4);
        let r = robustness_check(&net, &RobustnessSpec::new(x0.clone(), eps), &opts).unwrap();
        let ball = BoundedRegion::linf_ball(x0.clone(), eps).unwrap();
        let origin = class_of(net.forward(&x0).unwrap().as_slice(), 0.0);
        let flipped = grid_points(&ball, eps / 50.0)
            .unwrap()
            .iter()
            .any(|x| class_of(net.forward(x).unwrap().as_slice(), 0.0) != origin);
        if flipped {
            assert!(r.verdict.is_violated());
        }
        if let Verdict::Violated { witness, .. } = &r.verdict {
            assert!(ball.contains(witness, 1e-9));
            assert_ne!(class_of(net.forward(witness).unwrap().as_slice(), 0.0), origin);
        }
    }
}

#[test]
fn counterfactuals_change_the_class_and_beat_the_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let region = square();
    let grid = grid_points(&region, 0.02).unwrap();
    for _ in 0..10 {
        let net = random_network(&mut rng, 2, &[6], 3);
        let x0 = vec![rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
        let origin = class_of(net.forward(&x0).unwrap().as_slice(), 0.0);
        let spec = CounterfactualSpec::new(x0.clone(), Norm::L2).with_region(region.clone());
        let r = counterfactual(&net, &spec, &VerifyOptions::default()).unwrap();
        let grid_best = grid
            .iter()
            .filter(|x| class_of(net.forward(x).unwrap().as_slice(), 0.0) != origin)
            .map(|x| Norm::L2.distance(x, &x0))
            .fold(f64::INFINITY, f64::min);
        match r.status {
            CounterfactualStatus::Found => {
                let d = r.distance.unwrap();
                assert!(d <= grid_best + 1e-6);
                let point = r.point.unwrap();
                assert_ne!(class_of(net.forward(&point).unwrap().as_slice(), 0.0), origin);
            }
            CounterfactualStatus::NoneFound => assert!(grid_best.is_infinite()),
            CounterfactualStatus::Truncated => panic!("unexpected truncation"),
        }
    }
}

#[test]
fn property_truncation_is_reported() {
    let net = random_network(&mut ChaCha8Rng::seed_from_u64(43), 2, &[8], 2);
    let spec = PropertySpec {
        region: square(),
        inequalities: vec![Inequality {
            a: vec![1.0, 0.0],
            beta: -100.0,
        }],
        mode: PropertyMode::Forall,
    };
    let opts = VerifyOptions {
        max_polytopes: Some(1),
        ..VerifyOptions::default()
    };
    let r = verify_output_property(&net, &spec, &opts).unwrap();
    assert_eq!(r.verdict, Verdict::Truncated);
    assert!(verify_output_property(&net, &spec, &VerifyOptions::default())
        .unwrap()
        .verdict
        .is_verified());
}
