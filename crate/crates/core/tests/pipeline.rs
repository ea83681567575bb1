use mandiff::density::ManifoldDensity;
use mandiff::diffusion::DiffusionSchedule;
use mandiff::evaluation::{rate_experiment, wasserstein1_with, RateSettings};
use mandiff::geometry::EmbeddedManifold;
use mandiff::model::{checkpoint, dsm_loss, score_l2_error, train, ModelSpec, TimeSampling, TrainConfig};
use mandiff::oracle::Oracle;
use mandiff::par::Execution;
use mandiff::rng::{gaussian_vec, stream};
use mandiff::sampler::{backward_sample, manifold_proximity_stats, SamplerConfig, StepGrid};
use mandiff::{GaussianScore, PointCloud, Result, ScoreField};
use proptest::prelude::*;

struct Shifted<'a> {
    base: &'a Oracle,
    c: Vec<f64>,
}

impl ScoreField for Shifted<'_> {
    fn ambient_dim(&self) -> usize {
        self.c.len()
    }

    fn score(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        Ok(self.base.score_at(x, t)?.iter().zip(&self.c).map(|(s, c)| s + c).collect())
    }
}

fn schedule() -> DiffusionSchedule {
    DiffusionSchedule::new(1e-3, 10.0).unwrap()
}

fn atom() -> (ManifoldDensity, Oracle) {
    let m = EmbeddedManifold::point_set(vec![vec![0.4, -0.7]]).unwrap();
    let d = ManifoldDensity::uniform(m, 1).unwrap();
    (d.clone(), Oracle::new(d, 1).unwrap())
}

fn circle() -> (ManifoldDensity, Oracle) {
    let d = ManifoldDensity::uniform(EmbeddedManifold::circle(1.0).unwrap(), 256).unwrap();
    (d.clone(), Oracle::new(d, 256).unwrap())
}

#[test]
fn single_atom_oracle_has_zero_dsm_loss() {
    let (d, o) = atom();
    let data = d.sample(64, 1, Execution::Sequential);
    for sampling in [TimeSampling::Uniform, TimeSampling::LogUniformWeighted] {
        let loss = dsm_loss(&data, &o, &schedule(), 4, sampling, 2, Execution::Sequential).unwrap();
        assert!(loss.abs() < 1e-18, "{loss}");
    }
}

#[test]
fn dsm_loss_excess_is_the_score_error_for_an_atom() {
    let (d, o) = atom();
    let data = d.sample(32, 1, Execution::Sequential);
    let c = vec![0.3, -0.4];
    let shifted = Shifted { base: &o, c: c.clone() };
    let loss = dsm_loss(&data, &shifted, &schedule(), 4, TimeSampling::Uniform, 3, Execution::Sequential).unwrap();
    assert!((loss - 0.25).abs() < 1e-10, "{loss}");
}

#[test]
fn shifted_oracle_has_score_error_c_squared() {
    let (d, o) = circle();
    let shifted = Shifted { base: &o, c: vec![0.3, 0.4] };
    let e = score_l2_error(&shifted, &o, &d, &schedule(), 300, 4, Execution::Sequential).unwrap();
    assert!((e.mean - 0.25).abs() < 1e-9, "{}", e.mean);
    assert!(e.std_error < 1e-9);
    assert_eq!(e.used + e.skipped, 300);
}

#[test]
fn gaussian_score_keeps_the_standard_normal() {
    let mut cfg = SamplerConfig::new(400, schedule(), 5);
    cfg.grid = StepGrid::Uniform;
    let run = backward_sample(&GaussianScore { dim: 2 }, &cfg, 4000, Execution::Sequential).unwrap();
    assert_eq!(run.aborted, 0);
    let mean = run.cloud.mean();
    let var: f64 = run.cloud.rows().map(|r| r[0] * r[0] + r[1] * r[1]).sum::<f64>() / (2.0 * 4000.0);
    for m in mean {
        assert!(m.abs() < 4.0 / 4000f64.sqrt());
    }
    assert!((var - 1.0).abs() < 0.1, "{var}");
}

#[test]
fn oracle_sampler_lands_near_the_manifold() {
    let (d, o) = circle();
    let cfg = SamplerConfig::new(200, schedule(), 6);
    let run = backward_sample(&o, &cfg, 200, Execution::auto()).unwrap();
    let stats = manifold_proximity_stats(&run.cloud, d.manifold());
    assert!(stats.mean < 0.1, "{stats:?}");
}

#[test]
fn sampling_is_identical_across_execution_modes() {
    let (_, o) = circle();
    let cfg = SamplerConfig::new(50, schedule(), 7);
    let a = backward_sample(&o, &cfg, 64, Execution::Sequential).unwrap();
    let b = backward_sample(&o, &cfg, 64, Execution::auto()).unwrap();
    assert_eq!(a.cloud.as_flat(), b.cloud.as_flat());
}

#[test]
fn training_reduces_the_loss_and_round_trips_through_a_checkpoint() {
    let (d, _) = circle();
    let data = d.sample(256, 8, Execution::Sequential);
    let heldout = d.sample(64, 9, Execution::Sequential);
    let mut spec = ModelSpec::new(1e-3);
    spec.width = 32;
    spec.hidden = 2;
    let model = spec.build(2, 10).unwrap();
    let cfg = TrainConfig::new(schedule(), 15, 11);
    let (trained, report) = train(&data, Some(&heldout), model, &cfg, Execution::auto()).unwrap();
    assert_eq!(report.train_loss.len(), 15);
    assert!(report.train_loss.last().unwrap() < report.train_loss.first().unwrap());
    assert!(trained.max_abs_param() <= trained.weight_bound());

    let back = checkpoint::from_bytes(&checkpoint::to_bytes(&trained)).unwrap();
    let x = [0.7, -0.9];
    assert_eq!(back.forward(&x, 0.3), trained.forward(&x, 0.3));
}

#[test]
fn rate_report_is_reproducible() {
    let (d, o) = circle();
    let sched = schedule();
    let mut model = ModelSpec::new(sched.t0);
    model.width = 8;
    model.hidden = 1;
    let settings = RateSettings {
        n_grid: vec![30, 60, 120],
        repeats: 2,
        eval_size: 24,
        score_mc: 40,
        oracle_baseline: true,
        model,
        train: TrainConfig::new(sched, 2, 0),
        sampler: SamplerConfig::new(20, sched, 0),
        seed: 12,
    };
    let a = rate_experiment(&d, &o, &settings, Execution::Sequential).unwrap();
    let b = rate_experiment(&d, &o, &settings, Execution::auto()).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.cells.len(), 6);
    assert_eq!(a.summary.len(), 3);
    assert!(a.fit.is_some());
    assert_eq!(a.w1_exponent, -0.5);
    assert_eq!(a.score_exponent, -1.0);
}

#[test]
fn degenerate_rate_grid_is_reported_not_fitted() {
    let (d, o) = circle();
    let sched = schedule();
    let mut model = ModelSpec::new(sched.t0);
    model.width = 4;
    model.hidden = 1;
    let settings = RateSettings {
        n_grid: vec![20],
        repeats: 2,
        eval_size: 8,
        score_mc: 0,
        oracle_baseline: false,
        model,
        train: TrainConfig::new(sched, 1, 0),
        sampler: SamplerConfig::new(10, sched, 0),
        seed: 0,
    };
    let r = rate_experiment(&d, &o, &settings, Execution::Sequential).unwrap();
    assert!(r.fit.is_none());
    assert!(r.fit_note.is_some());
}

fn cloud(seed: u64, n: usize, dim: usize) -> PointCloud {
    let mut r = stream(seed, 0);
    PointCloud::from_rows(dim, &(0..n).map(|_| gaussian_vec(&mut r, dim)).collect::<Vec<_>>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn w1_is_symmetric_and_vanishes_on_the_diagonal(s1 in any::<u64>(), s2 in any::<u64>(), n in 1usize..40) {
        let (a, b) = (cloud(s1, n, 3), cloud(s2, n, 3));
        let ab = wasserstein1_with(&a, &b, Execution::Sequential).unwrap();
        let ba = wasserstein1_with(&b, &a, Execution::Sequential).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert_eq!(wasserstein1_with(&a, &a, Execution::Sequential).unwrap(), 0.0);
    }

    #[test]
    fn w1_of_a_translate_is_the_shift_length(s in any::<u64>(), n in 1usize..30, v in prop::array::uniform2(-2.0f64..2.0)) {
        let a = cloud(s, n, 2);
        let rows: Vec<Vec<f64>> = a.rows().map(|r| vec![r[0] + v[0], r[1] + v[1]]).collect();
        let b = PointCloud::from_rows(2, &rows);
        let w = wasserstein1_with(&a, &b, Execution::Sequential).unwrap();
        prop_assert!((w - (v[0] * v[0] + v[1] * v[1]).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn w1_triangle_inequality(s1 in any::<u64>(), s2 in any::<u64>(), s3 in any::<u64>(), n in 1usize..25) {
        let (a, b, c) = (cloud(s1, n, 2), cloud(s2, n, 2), cloud(s3, n, 2));
        let w = |x: &PointCloud, y: &PointCloud| wasserstein1_with(x, y, Execution::Sequential).unwrap();
        prop_assert!(w(&a, &c) <= w(&a, &b) + w(&b, &c) + 1e-10);
    }
}
