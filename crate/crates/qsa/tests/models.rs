use qsa::amplitude::EstimatorContext;
use qsa::gibbs::*;
use qsa::phase::OracleMode;
use qsa::pipeline::{generate_schedule, PartitionConfig, PartitionPlan};
use qsa::qcore::RandomSource;
use qsa::Error;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * b.abs().max(1.0)
}

#[test]
fn closed_form_partition_functions() {
    let ising = GibbsModel::from_spec("ising:edge").unwrap();
    let beta = 0.7;
    assert!(close(ising.partition(Beta::Finite(beta)).unwrap(), 2.0 * beta.exp() + 2.0));
    assert!(close(ising.partition(Beta::Finite(0.0)).unwrap(), 4.0));

    let potts = GibbsModel::from_spec("potts:C4:3").unwrap();
    assert!(close(potts.partition(Beta::Infinite).unwrap(), 18.0));
    assert!(close(potts.partition(Beta::Finite(0.0)).unwrap(), 81.0));

    let matchings = GibbsModel::from_spec("matchings:triangle").unwrap();
    assert!(close(matchings.partition(Beta::Finite(0.0)).unwrap(), 4.0));
    assert!(close(matchings.partition(Beta::Infinite).unwrap(), 1.0));

    let hardcore = GibbsModel::from_spec("hardcore:P3").unwrap();
    assert!(close(hardcore.partition(Beta::Finite(0.0)).unwrap(), 5.0));
}

#[test]
fn gibbs_laws_are_normalized() {
    for spec in ["ising:C4", "potts:triangle:3", "matchings:grid2x2", "independent-sets:C5"] {
        let m = GibbsModel::from_spec(spec).unwrap();
        for beta in [Beta::Finite(0.0), Beta::Finite(1.3)] {
            let p = m.gibbs_probs(beta).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12, "{spec}");
            assert_eq!(p.len(), m.size());
        }
    }
}

#[test]
fn unknown_models_are_rejected() {
    assert!(matches!(GibbsModel::from_spec("spinglass:edge"), Err(Error::Model(_))));
    assert!(matches!(GibbsModel::from_spec("ising:/no/such/graph.txt"), Err(Error::Io { .. })));
}

#[test]
fn edge_list_files_load() {
    let g = Graph::parse_edge_list("# a path\n0 1\n1 2 # tail\n\n", "p3").unwrap();
    assert_eq!(g.vertices, 3);
    assert_eq!(g.edges.len(), 2);
    assert!(Graph::parse_edge_list("0 x\n", "bad").is_err());
    assert!(Graph::parse_edge_list("", "empty").is_err());

    let path = std::env::temp_dir().join(format!("qsa-models-{}.edges", std::process::id()));
    std::fs::write(&path, "0 1\n1 2\n2 0\n").unwrap();
    let m = GibbsModel::from_spec(&format!("matchings:{}", path.display())).unwrap();
    assert!(close(m.partition(Beta::Finite(0.0)).unwrap(), 4.0));
    std::fs::remove_file(path).unwrap();
}

#[test]
fn glauber_chains_are_reversible_and_stationary() {
    for spec in ["ising:P3", "potts:edge:3", "matchings:C4", "independent-sets:P4"] {
        let m = GibbsModel::from_spec(spec).unwrap();
        let c = glauber_chain(&m, Beta::Finite(0.8)).unwrap();
        assert!(c.reversible && c.ergodic, "{spec}");
        assert!(c.stationarity_error() < 1e-12, "{spec}");
        let gap = spectral_gap(&c).unwrap();
        assert!(gap > 0.0 && gap <= 1.0 + 1e-12, "{spec}: {gap}");
    }
}

#[test]
fn eigensolvers_agree() {
    let mut rng = RandomSource::new(9);
    for n in 2..8 {
        let c = random_reversible_chain(n, &mut rng).unwrap();
        let a = discriminant_spectrum(&c).unwrap();
        let b = discriminant_spectrum_jacobi(&c).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
        assert!((a[0] - 1.0).abs() < 1e-9);
    }
}

#[test]
fn szegedy_walk_matches_discriminant_spectrum() {
    let mut rng = RandomSource::new(12);
    for n in 2..7 {
        let c = random_reversible_chain(n, &mut rng).unwrap();
        assert!(szegedy_walk(&c).unwrap().is_unitary());
        let got = walk_busy_cosines(&c).unwrap();
        let want = expected_walk_cosines(&discriminant_spectrum(&c).unwrap());
        assert_eq!(got.len(), want.len());
        for (x, y) in got.iter().zip(&want) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
    }
}

#[test]
fn schedules_satisfy_their_bounds_and_telescope() {
    let b = std::f64::consts::E.powi(2);
    for (spec, target) in [
        ("potts:C4:3", None),
        ("matchings:triangle", None),
        ("independent-sets:P3", None),
        ("ising:edge", Some(Beta::Finite(2f64.ln()))),
    ] {
        let m = GibbsModel::from_spec(spec).unwrap();
        let s = generate_schedule(&m, b, 0.1, target).unwrap();
        s.verify(&m).unwrap();
        let last = *s.betas.last().unwrap();
        assert!(close(s.telescoping_product(&m).unwrap(), m.partition(last).unwrap()), "{spec}");
    }
}

#[test]
fn ferromagnetic_models_need_a_target() {
    let m = GibbsModel::from_spec("ising:edge").unwrap();
    assert!(generate_schedule(&m, 7.0, 0.1, None).is_err());
}

#[test]
fn partition_estimates_land_within_eps() {
    let m = GibbsModel::from_spec("matchings:triangle").unwrap();
    let plan = PartitionPlan::new(&m, 0.25, &PartitionConfig::default()).unwrap();
    let ctx = EstimatorContext::new(OracleMode::Exact);
    let mut rng = RandomSource::new(30);
    let mut hits = 0;
    for _ in 0..20 {
        let r = plan.run(&ctx, &mut rng).unwrap();
        assert_eq!(r.ledger.reflections, r.ledger.reflections_per_stage.iter().sum::<u128>());
        assert!(r.ledger.walk_steps.unwrap() >= r.ledger.reflections);
        hits += r.success.unwrap_or(false) as u32;
    }
    assert!(hits >= 14, "{hits}/20");
}
