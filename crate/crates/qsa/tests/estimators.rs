use qsa::amplitude::{coin_flip, ndae, nduae, AmplitudeInstance, EstimatorContext};
use qsa::mean::{anneal, medi, qestim, FiniteRandomVariable, ProductConfig, ProductPlan};
use qsa::phase::{pe_distribution, sample_phase_estimate, upe, FixedPhase, OracleMode, PhaseInstance, StageConfig};
use qsa::pipeline::{exact_median, synthetic_stages, SYNTHETIC_B};
use qsa::qcore::RandomSource;
use qsa::stats::summarize;

fn ctx() -> EstimatorContext {
    EstimatorContext::new(OracleMode::Exact)
}

#[test]
fn sampled_phase_cells_follow_the_law() {
    let (theta, t, n) = (0.3137, 16u64, 40_000);
    let law = pe_distribution(theta, t).unwrap();
    let mut rng = RandomSource::new(3);
    let mut inst = PhaseInstance::new(theta).unwrap();
    let mut counts = vec![0u64; t as usize];
    for _ in 0..n {
        counts[sample_phase_estimate(&mut inst, FixedPhase(0), t, &mut rng).unwrap() as usize] += 1;
    }
    for (c, p) in counts.iter().zip(&law) {
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((*c as f64 / n as f64 - p).abs() <= 5.0 * se + 1e-12);
    }
    assert_eq!(inst.controlled_ops, t * n);
}

#[test]
fn upe_is_unbiased_off_grid() {
    let theta = 0.2113;
    let mut rng = RandomSource::new(11);
    let xs: Vec<f64> = (0..20_000)
        .map(|_| {
            let mut inst = PhaseInstance::new(theta).unwrap();
            upe(&mut inst, 16, 0.01, OracleMode::Exact, StageConfig::default(), &mut rng).unwrap().estimate
        })
        .collect();
    let s = summarize(&xs);
    assert!((s.mean - theta).abs() < 4.0 * s.se_mean + 0.01, "{} vs {theta}", s.mean);
}

#[test]
fn upe_rejects_phases_above_one_half() {
    let mut inst = PhaseInstance::new(0.5).unwrap();
    inst.theta = FixedPhase::from_f64(0.75);
    let mut rng = RandomSource::new(1);
    assert!(upe(&mut inst, 8, 0.1, OracleMode::Exact, StageConfig::default(), &mut rng).is_err());
}

#[test]
fn coin_flip_restores_and_is_fair() {
    let p = 0.3;
    let mut rng = RandomSource::new(5);
    let mut inst = AmplitudeInstance::new(p).unwrap();
    let n = 50_000;
    let ones = (0..n).filter(|_| coin_flip(&mut inst, &mut rng).unwrap().b).count();
    assert!(inst.restored);
    let se = (p * (1.0 - p) / n as f64).sqrt();
    assert!((ones as f64 / n as f64 - p).abs() < 5.0 * se);
}

#[test]
fn ndae_reports_zero_on_empty_amplitude() {
    let mut rng = RandomSource::new(2);
    let c = ctx();
    for _ in 0..100 {
        let mut inst = AmplitudeInstance::new(0.0).unwrap();
        assert_eq!(ndae(&mut inst, 16.0, 0.1, &c, &mut rng).unwrap(), 0.0);
    }
}

#[test]
fn nduae_is_unbiased_and_tracks_cost() {
    let p = 0.2;
    let c = ctx();
    let mut rng = RandomSource::new(8);
    let mut total_refl = 0u64;
    let xs: Vec<f64> = (0..5_000)
        .map(|_| {
            let mut inst = AmplitudeInstance::new(p).unwrap();
            let out = nduae(&mut inst, 16.0, 0.01, &c, &mut rng).unwrap();
            total_refl += inst.reflections;
            out.estimate
        })
        .collect();
    let s = summarize(&xs);
    assert!((s.mean - p).abs() < 4.0 * s.se_mean + 0.01 * p);
    assert!(total_refl > 0);
}

#[test]
fn nduae_needs_t_at_least_four() {
    let mut inst = AmplitudeInstance::new(0.5).unwrap();
    assert!(nduae(&mut inst, 2.0, 0.1, &ctx(), &mut RandomSource::new(1)).is_err());
}

#[test]
fn qestim_is_unbiased_on_a_skewed_table() {
    let x = FiniteRandomVariable::new(vec![0.0, 1.0, 4.0], vec![0.6, 0.3, 0.1]).unwrap();
    let c = ctx();
    let mut rng = RandomSource::new(13);
    let med = exact_median(&x);
    let xs: Vec<f64> = (0..2_000).map(|_| qestim(&x, 8.0, med, x.std_dev(), 0.05, &c, &mut rng).unwrap().estimate).collect();
    let s = summarize(&xs);
    assert!((s.mean - x.mean()).abs() < 4.0 * s.se_mean + 0.05 * x.std_dev() / 8.0);
}

#[test]
fn qestim_on_a_point_mass_is_exact() {
    let x = FiniteRandomVariable::point_mass(2.5);
    let out = qestim(&x, 8.0, 2.5, 0.0, 0.1, &ctx(), &mut RandomSource::new(1)).unwrap();
    assert_eq!(out.estimate, 2.5);
    assert_eq!(out.reflections, 0);
}

#[test]
fn medi_stays_within_contract() {
    let values: Vec<f64> = (1..=50).map(f64::from).collect();
    let x = FiniteRandomVariable::uniform(&values).unwrap();
    let c = ctx();
    let mut rng = RandomSource::new(21);
    for _ in 0..200 {
        let m = medi(&x, 0.1, &c, &mut rng).unwrap();
        assert!((m.median - x.mean()).abs() <= 17.0 * x.std_dev());
        assert!(m.probes as usize <= 1 + (values.len() as f64).log2().ceil() as usize);
    }
}

#[test]
fn anneal_round_count_matches_its_law() {
    let f = 0.4;
    let mut rng = RandomSource::new(4);
    let xs: Vec<f64> = (0..50_000).map(|_| anneal(f, &mut rng).unwrap().rounds as f64).collect();
    let s = summarize(&xs);
    let expected = f + (1.0 - f) * (2.0 + (1.0 - 2.0 * f * (1.0 - f)) / (2.0 * f * (1.0 - f)));
    assert!((s.mean - expected).abs() < 5.0 * s.se_mean, "{} vs {expected}", s.mean);
    assert!(anneal(0.0, &mut rng).is_err());
}

#[test]
fn product_estimate_and_ledger_conservation() {
    let plan = ProductPlan::new(synthetic_stages(3), SYNTHETIC_B, 0.1, ProductConfig::default()).unwrap();
    let c = ctx();
    let mut rng = RandomSource::new(17);
    let truth = plan.true_product();
    let mut hits = 0;
    for _ in 0..20 {
        let out = plan.run(&c, &mut rng).unwrap();
        let sum: u128 = out.stages.iter().map(|s| s.medi_reflections + s.qestim_reflections + s.anneal_reflections).sum();
        assert_eq!(out.reflections(), sum);
        assert_eq!(out.stages.len(), 3);
        hits += ((out.estimate - truth).abs() <= 0.1 * truth) as u32;
    }
    assert!(hits >= 14, "{hits}/20");
}
