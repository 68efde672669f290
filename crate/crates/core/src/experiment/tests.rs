use super::*;
use crate::channel::ChannelRealization;
use crate::neuralnet::{LinearSoftmax, TrainConfig};
use crate::rng::seeded;

fn small_cfg() -> ScenarioConfig<f64> {
    let mut c = ScenarioConfig::new(Topology::new("A1", 0.5, 0.5));
    c.train_frames = 400;
    c.test_trials = 60;
    c.train_cfg = TrainConfig { epochs: 2, ..TrainConfig::default() };
    c.pnr_grid_db = vec![-20.0, -5.0, 10.0];
    c
}

#[test]
fn dataset_balance_and_determinism() {
    let f = FadingParams::default();
    let a = build_dataset(1.0, 4, 0.1, &f, 16, 1.0, &mut seeded(1)).unwrap();
    assert_eq!(a.iter().filter(|l| l.label == ClassLabel::Signal).count(), 2);
    assert_eq!(a.iter().filter(|l| l.label == ClassLabel::Noise).count(), 2);
    let b = build_dataset(1.0, 4, 0.1, &f, 16, 1.0, &mut seeded(1)).unwrap();
    assert_eq!(a, b);
    assert!(build_dataset(1.0, 5, 0.1, &f, 16, 1.0, &mut seeded(1)).is_err());
    let z = build_dataset(1.0, 20, 0.0, &f, 16, 1.0, &mut seeded(2)).unwrap();
    for l in z.iter().filter(|l| l.label == ClassLabel::Noise) {
        assert!(l.frame.is_zero());
    }
}

#[test]
fn p_max_examples() {
    assert_eq!(p_max_from_pnr(0.0f64, 1.0, 16).unwrap(), 16.0);
    assert!((p_max_from_pnr(10.0f64, 1.0, 16).unwrap() - 160.0).abs() < 1e-12);
    assert_eq!(p_max_from_pnr(f64::NEG_INFINITY, 1.0, 16).unwrap(), 0.0);
    assert!(p_max_from_pnr(0.0f64, 0.0, 16).is_err());
}

fn table(rates: &[f64]) -> ResultTable<f64> {
    ResultTable {
        scenario: "t".into(),
        points: rates
            .iter()
            .enumerate()
            .map(|(i, &r)| CurvePoint { pnr_db: i as f64, success_rate: r, stderr: 0.0, n_trials: 1 })
            .collect(),
        meta: TableMeta::default(),
    }
}

#[test]
fn peaks() {
    assert_eq!(peak_pnr(&table(&[0.3])).unwrap(), 0.0);
    assert_eq!(peak_pnr(&table(&[0.1, 0.2, 0.3, 0.4])).unwrap(), 3.0);
    let bump: Vec<f64> = (0..21).map(|i| (-((i as f64 - 13.0) / 4.0).powi(2)).exp()).collect();
    assert_eq!(peak_pnr(&table(&bump)).unwrap(), 13.0);
    assert_eq!(peak_success(&table(&bump)).unwrap(), 1.0);
    assert_eq!(peak_pnr(&table(&[0.2, 0.5, 0.5, 0.1])).unwrap(), 1.0);
    assert!(peak_pnr(&table(&[])).is_err());
}

#[test]
fn curve_point_stderr() {
    let p = CurvePoint::<f64>::from_counts(0.0, 25, 100).unwrap();
    assert_eq!(p.success_rate, 0.25);
    assert!((p.stderr - (0.25f64 * 0.75 / 100.0).sqrt()).abs() < 1e-15);
    assert!(CurvePoint::<f64>::from_counts(0.0, 0, 0).is_err());
}

fn linear_pair() -> (LinearSoftmax<f64>, LinearSoftmax<f64>) {
    use rand::Rng;
    let mut rng = seeded(3);
    let mut w = || (0..32).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    let t = LinearSoftmax::new(16, w(), w(), [0.0, 0.0]).unwrap();
    let a = LinearSoftmax::new(16, w(), w(), [0.0, 0.0]).unwrap();
    (t, a)
}

#[test]
fn zero_budget_equals_baseline_miss() {
    let (t, a) = linear_pair();
    let cfg = small_cfg();
    let topo = cfg.topology.clone();
    for i in 0..200 {
        let o = run_trial(&t, &a, &cfg, &topo, &AttackTemplate::default(), f64::NEG_INFINITY, &mut trial_rng(&cfg, i))
            .unwrap();
        assert!(!o.attacked);
        assert_eq!(o.fooled, o.target_pre_label == ClassLabel::Noise);
    }
}

#[test]
fn white_box_search_fools_when_it_flips() {
    let (t, _) = linear_pair();
    let cfg = small_cfg();
    let tpl = AttackTemplate::new(PowerRule::SurrogateSearch, InputSource::TransmitterInput);
    let mut flips = 0;
    for i in 0..100 {
        let mut draw = draw_trial(&cfg, &cfg.topology, &mut trial_rng(&cfg, i)).unwrap();
        draw.h_at = ChannelRealization::identity(16).unwrap();
        let prepared = prepare_trial(&t, &draw, &tpl).unwrap();
        let pre = t.classify(&draw.r_bt).unwrap();
        let p_max = 1e4;
        let (_, res) = prepared.realize(p_max, p_max.sqrt() * 1e-3).unwrap();
        let o = evaluate_trial(&t, &prepared, &draw, pre, p_max, 1e-3).unwrap();
        if let Some(r) = res {
            if r.surrogate_flipped {
                flips += 1;
                assert!(o.fooled);
            }
        }
    }
    assert!(flips > 0);
}

#[test]
fn curve_is_reproducible_and_thread_independent() {
    let (t, a) = linear_pair();
    let cfg = small_cfg();
    let tpl = AttackTemplate::new(PowerRule::SurrogateSearch, InputSource::AdversaryInput);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| attack_success_curve("x", &t, &a, &cfg, &cfg.topology, &tpl).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one.points.len(), 3);
    assert_eq!(one.meta.budget_violations, 0);
    assert!(one.points.iter().all(|p| (0.0..=1.0).contains(&p.success_rate)));
    let mut bad = cfg.clone();
    bad.test_trials = 0;
    assert!(attack_success_curve("x", &t, &a, &bad, &cfg.topology, &tpl).is_err());
}

#[test]
fn pair_models_differ_even_at_equal_distance() {
    let mut cfg = small_cfg();
    cfg.topology.d_ba = 1.0;
    let (t, a) = train_pair(&cfg).unwrap();
    assert_ne!(t.params(), a.params());
    let (t2, _) = train_pair(&cfg).unwrap();
    assert_eq!(t.params(), t2.params());
}

#[test]
fn cache_reuses_models() {
    let cfg = small_cfg();
    let mut cache = ModelCache::new();
    let a = cache.get(&cfg, NodeRole::Surrogate, 0.5, &cfg.arch_a).unwrap();
    let b = cache.get(&cfg, NodeRole::Surrogate, 0.5, &cfg.arch_a).unwrap();
    assert!(Arc::ptr_eq(&a, &b));
    cache.get(&cfg, NodeRole::Surrogate, 1.0, &cfg.arch_a).unwrap();
    assert_eq!(cache.len(), 2);
}

#[test]
fn reproduce_shapes() {
    let mut cfg = small_cfg();
    cfg.test_trials = 20;
    let mut cache = ModelCache::new();
    let fix = reproduce_with_cache(Figure::FixDba, &cfg, &mut cache).unwrap();
    let labels: Vec<_> = fix.iter().map(|t| t.scenario.as_str()).collect();
    assert_eq!(labels, ["A1", "A2", "A3", "A4", UPPER_BOUND_LABEL]);
    assert!(fix[4].meta.white_box);
    let dta = reproduce_with_cache(Figure::FixDta, &cfg, &mut cache).unwrap();
    let d: Vec<f64> = dta.iter().map(|t| t.meta.d_ba).collect();
    assert_eq!(d, LOCATION_DISTANCES);
    assert!((LOCATION_DISTANCES[2] - 1.25f64.sqrt()).abs() < 1e-15);
    for t in fix.iter().chain(&dta) {
        assert_eq!(t.points.len(), cfg.pnr_grid_db.len());
    }
    assert_eq!(Figure::from_name("methods"), Some(Figure::Methods));
}
