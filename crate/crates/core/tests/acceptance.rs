//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `MANDIFF_ACCEPTANCE=1,2,11` restricts the run to the listed criteria.
//! `MANDIFF_ACCEPTANCE_STRICT=1` turns any FAIL into a nonzero exit status.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use mandiff::config::ExperimentConfig;
use mandiff::decomposition::{interaction_terms, linear_subspace_decompose, small_noise_decompose, LargeNoise};
use mandiff::density::{DensityForm, ManifoldDensity};
use mandiff::diffusion::{alpha, h, perturb, tube_hit_rate};
use mandiff::evaluation::{rate_experiment, wasserstein1_with, PointCloud};
use mandiff::geometry::{Atlas, EmbeddedManifold};
use mandiff::invariants::tube_point;
use mandiff::linalg::{dist, dot, max_abs, norm, sub};
use mandiff::model::{dsm_loss, loss_gradient, time_switch, train, ReluNetwork, TimeSwitchedScore};
use mandiff::oracle::Oracle;
use mandiff::par::Execution;
use mandiff::rng::{derive_seed, gaussian_vec, stream, uniform, StreamRng};
use mandiff::sampler::backward_sample;
use mandiff::Result;

struct Verdict {
    passed: bool,
    detail: String,
}

impl Verdict {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into() }
    }
}

/// Shared between criteria 11 and 12.
#[derive(Default)]
struct Carry {
    oracle_w1: Option<f64>,
}

fn exec() -> Execution {
    Execution::auto()
}

// ---------------------------------------------------------------- 1

/// `I₁(z)/I₀(z)` by composite Simpson on `[0, π]` with the integrand scaled
/// by `e^{−z}`.
fn bessel_ratio(z: f64) -> f64 {
    let n = 20_000;
    let step = PI / n as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..=n {
        let th = i as f64 * step;
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let e = (z * (th.cos() - 1.0)).exp();
        num += w * th.cos() * e;
        den += w * e;
    }
    num / den
}

/// Score of the noised uniform law on the unit circle:
/// `−x/h + (α/h)·(I₁/I₀)(α|x|/h)·x/|x|`.
fn circle_score(x: &[f64], t: f64) -> Vec<f64> {
    let (a, ht) = (alpha(t), h(t));
    let r = norm(x);
    let pull = a / ht * bessel_ratio(a * r / ht) / r;
    x.iter().map(|v| -v / ht + pull * v).collect()
}

fn c1(_: &mut Carry) -> Result<Verdict> {
    let d = ManifoldDensity::uniform(EmbeddedManifold::circle(1.0)?, 1024)?;
    let o = Oracle::new(d, 1024)?;
    let radii = [0.3, 0.6, 0.85, 1.0, 1.05, 1.2, 1.5, 2.0];
    let mut worst = 0.0f64;
    for t in [0.01, 0.1, 1.0] {
        for (i, r) in radii.iter().enumerate() {
            for j in 0..25 {
                let th = 2.0 * PI * (j as f64 + 0.37 * i as f64) / 25.0;
                let x = [r * th.cos(), r * th.sin()];
                let exact = circle_score(&x, t);
                let got = o.score_at(&x, t)?;
                worst = worst.max(norm(&sub(&got, &exact)) / norm(&exact));
            }
        }
    }
    Ok(Verdict::new(worst < 1e-6, format!("max relative error {worst:.2e} (< 1e-6) over 200 points × 3 times")))
}

// ---------------------------------------------------------------- 2

fn c2(_: &mut Carry) -> Result<Verdict> {
    let atoms = [[0.8, -0.3], [-0.6, 0.9]];
    let weights = [0.3, 0.7];
    let m = EmbeddedManifold::point_set(atoms.iter().map(|a| a.to_vec()).collect())?;
    let o = Oracle::new(ManifoldDensity::new(m, DensityForm::Discrete { weights: weights.to_vec() }, 1)?, 1)?;
    let mut r = stream(2, 0);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let t = 0.01 * 300f64.powf(uniform(&mut r));
        let (a, ht) = (alpha(t), h(t));
        // a point on the segment between the shrunk atoms plus 2√h noise
        let (u, g) = (uniform(&mut r), gaussian_vec(&mut r, 2));
        let x: Vec<f64> =
            (0..2).map(|j| a * (u * atoms[0][j] + (1.0 - u) * atoms[1][j]) + 2.0 * ht.sqrt() * g[j]).collect();
        // posterior responsibilities, stabilised by the larger exponent
        let e: Vec<f64> = atoms
            .iter()
            .zip(weights)
            .map(|(mu, w)| w.ln() - ((x[0] - a * mu[0]).powi(2) + (x[1] - a * mu[1]).powi(2)) / (2.0 * ht))
            .collect();
        let top = e[0].max(e[1]);
        let g: Vec<f64> = e.iter().map(|v| (v - top).exp()).collect();
        let (g0, g1) = (g[0] / (g[0] + g[1]), g[1] / (g[0] + g[1]));
        let expect: Vec<f64> =
            (0..2).map(|j| -(g0 * (x[j] - a * atoms[0][j]) + g1 * (x[j] - a * atoms[1][j])) / ht).collect();
        let got = o.score_at(&x, t)?;
        worst = worst.max(max_abs(&sub(&got, &expect)) / norm(&expect).max(1.0));
    }
    Ok(Verdict::new(worst < 1e-10, format!("max error {worst:.2e} (< 1e-10) at 10^3 random (x, t)")))
}

// ---------------------------------------------------------------- 3, 4, 5

fn circle_four_charts() -> Result<(Oracle, Atlas)> {
    let m = EmbeddedManifold::circle(1.0)?;
    let centers = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]];
    let atlas = Atlas::from_centers(&m, centers, 1.2)?;
    Ok((Oracle::new(ManifoldDensity::uniform(m, 1024)?, 1024)?, atlas))
}

fn sphere() -> Result<(Oracle, Atlas)> {
    let m = EmbeddedManifold::sphere(2, 1.0)?;
    let atlas = Atlas::build(&m, 1.0)?;
    Ok((Oracle::new(ManifoldDensity::uniform(m, 128)?, 128)?, atlas))
}

fn log_uniform(r: &mut StreamRng, lo: f64, hi: f64) -> f64 {
    lo * (hi / lo).powf(uniform(r))
}

fn c3(_: &mut Carry) -> Result<Verdict> {
    let mut notes = Vec::new();
    let mut ok = true;
    for (name, (o, atlas)) in [("circle", circle_four_charts()?), ("sphere", sphere()?)] {
        let ln = LargeNoise::new(&o, &atlas)?;
        let mut r = stream(3, 0);
        let (mut rec, mut wsum, mut wmin) = (0.0f64, 0.0f64, f64::INFINITY);
        for _ in 0..1000 {
            let t = log_uniform(&mut r, 0.05, 3.0);
            let (x, _) = tube_point(o.manifold(), t, 0.9 * uniform(&mut r), &mut r)?;
            let d = ln.decompose(&x, t)?;
            rec = rec.max(max_abs(&sub(&d.reconstruct(), &o.score_at(&x, t)?)));
            wsum = wsum.max((d.weights.iter().sum::<f64>() - 1.0).abs());
            wmin = wmin.min(d.weights.iter().copied().fold(f64::INFINITY, f64::min));
        }
        ok &= rec < 1e-8 && wsum < 1e-10 && wmin >= 0.0;
        notes.push(format!("{name} ({} charts): error {rec:.1e}, |Σw−1| {wsum:.1e}, min w {wmin:.1e}", atlas.len()));
    }
    Ok(Verdict::new(ok, notes.join("; ")))
}

fn c4(_: &mut Carry) -> Result<Verdict> {
    let mut notes = Vec::new();
    let mut ok = true;
    for (name, (o, _)) in [("circle", circle_four_charts()?), ("sphere", sphere()?)] {
        let m = o.manifold();
        let mut r = stream(4, 0);
        let (mut rec, mut orth, mut ratio) = (0.0f64, 0.0f64, 0.0f64);
        for _ in 0..1000 {
            let t = log_uniform(&mut r, 1e-3, 0.5);
            let (x, p) = tube_point(m, t, 0.9 * uniform(&mut r), &mut r)?;
            let d = small_noise_decompose(&o, &x, t)?;
            rec = rec.max(max_abs(&sub(&d.reconstruct(), &d.oracle_score)));
            for u in m.tangent_frame(&p)?.columns() {
                orth = orth.max(dot(&d.s_perp, u).abs());
            }
            ratio = ratio.max(max_abs(&sub(&d.s_on, &d.s_on_ratio)));
        }
        ok &= rec < 1e-8 && orth < 1e-8 && ratio < 1e-8;
        notes.push(format!("{name}: reconstruction {rec:.1e}, ⟨s⊥,T⟩ {orth:.1e}, ratio vs residual {ratio:.1e}"));
    }
    Ok(Verdict::new(ok, notes.join("; ")))
}

fn c5(_: &mut Carry) -> Result<Verdict> {
    let mut violations = 0usize;
    let mut min_slack = f64::INFINITY;
    for (k, (o, _)) in [circle_four_charts()?, sphere()?].into_iter().enumerate() {
        let m = o.manifold();
        let mut r = stream(5, k as u64);
        for i in 0..5000 {
            let t = log_uniform(&mut r, 1e-3, 3.0);
            let (x, _) = tube_point(m, t, 0.99 * uniform(&mut r), &mut r)?;
            let x0 = o.density().sample_one(derive_seed(5, &[k as u64]), i);
            let terms = interaction_terms(&o, &x, t, &x0)?;
            if !terms.holds() {
                violations += 1;
            }
            min_slack = min_slack.min(terms.slack());
        }
    }
    Ok(Verdict::new(violations == 0, format!("{violations} violations in 10^4 triples (circle, sphere); min slack {min_slack:.2e}")))
}

// ---------------------------------------------------------------- 6

fn c6(_: &mut Carry) -> Result<Verdict> {
    let (u, v) = ([0.6, 0.8, 0.0], [-0.48, 0.36, 0.8]);
    let m = EmbeddedManifold::linear_subspace(vec![u.to_vec(), v.to_vec()], 1.0)?;
    let o = Oracle::new(ManifoldDensity::uniform(m, 128)?, 128)?;
    let mut r = stream(6, 0);
    let (mut e2, mut split) = (0.0f64, 0.0f64);
    for i in 0..1000 {
        let t = log_uniform(&mut r, 1e-2, 3.0);
        let x = gaussian_vec(&mut r, 3);
        let x0 = o.density().sample_one(6, i);
        e2 = e2.max(interaction_terms(&o, &x, t, &x0)?.e2.abs());

        let (a, ht) = (alpha(t), h(t));
        let px: Vec<f64> = (0..3).map(|j| dot(&x, &u) * u[j] + dot(&x, &v) * v[j]).collect();
        let mean = o.posterior_mean(&x, t)?;
        let s_perp: Vec<f64> = (0..3).map(|j| -(x[j] - px[j]) / ht).collect();
        let s_on: Vec<f64> = (0..3).map(|j| (a * mean[j] - px[j]) / ht).collect();
        let d = linear_subspace_decompose(&o, &x, t)?;
        split = split.max(max_abs(&sub(&d.s_perp, &s_perp))).max(max_abs(&sub(&d.s_on, &s_on)));
        split = split.max(max_abs(&sub(&d.reconstruct(), &o.score_at(&x, t)?)));
    }
    Ok(Verdict::new(
        e2 < 1e-10 && split < 1e-10,
        format!("max |E₂| {e2:.1e}, split vs orthogonal-score formula {split:.1e} (both < 1e-10)"),
    ))
}

// ---------------------------------------------------------------- 7

fn c7(_: &mut Carry) -> Result<Verdict> {
    let ms = [EmbeddedManifold::circle(1.0)?, EmbeddedManifold::sphere(2, 1.0)?, EmbeddedManifold::torus(2.0, 0.7)?];
    let mut r = stream(7, 0);
    let mut worst = 0.0f64;
    for i in 0..200 {
        let m = &ms[i % 3];
        let t = log_uniform(&mut r, 1e-3, 2.0);
        let (x, _) = tube_point(m, t, 0.8 * uniform(&mut r), &mut r)?;
        let res = sub(&x, &m.project(&x, t)?);
        let eps = 1e-6;
        let plus: Vec<f64> = x.iter().zip(&res).map(|(a, b)| a + eps * b).collect();
        let minus: Vec<f64> = x.iter().zip(&res).map(|(a, b)| a - eps * b).collect();
        let jv = sub(&m.project(&plus, t)?, &m.project(&minus, t)?);
        worst = worst.max(norm(&jv) / (2.0 * eps));
    }
    Ok(Verdict::new(worst < 1e-4, format!("max ‖J_Π(x − Π)‖ {worst:.1e} (< 1e-4), 200 points on circle/sphere/torus")))
}

// ---------------------------------------------------------------- 8

fn c8(_: &mut Carry) -> Result<Verdict> {
    let two = ManifoldDensity::uniform(EmbeddedManifold::circle(1.0)?, 256)?;
    let three = ManifoldDensity::uniform(EmbeddedManifold::sphere(2, 1.0)?, 64)?;
    let mut ok = true;
    let mut worst = f64::INFINITY;
    let mut cases = 0;
    for (dd, density) in [(2u64, &two), (3u64, &three)] {
        for delta in [0.05, 0.1] {
            for (k, t) in [0.01, 0.1, 1.0].into_iter().enumerate() {
                let s = tube_hit_rate(density, t, delta, 10_000, derive_seed(8, &[dd, k as u64]), exec())?;
                ok &= s.passes();
                worst = worst.min(s.rate() - (s.bound - 3.0 * s.sigma()));
                cases += 1;
            }
        }
    }
    Ok(Verdict::new(ok, format!("{cases} cases (D ∈ {{2,3}}, δ ∈ {{0.05,0.1}}, t ∈ {{0.01,0.1,1}}); min margin over 1 − δ^D − 3σ: {worst:.4}")))
}

// ---------------------------------------------------------------- 9

fn c9(_: &mut Carry) -> Result<Verdict> {
    let (tl, ts) = (0.2, 0.7);
    let mut worst = 0.0f64;
    let mut inside = true;
    for i in 0..1000 {
        let t = 3.0 * i as f64 / 999.0;
        let (a, b) = time_switch(t, tl, ts)?;
        inside &= (0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b);
        worst = worst.max((a + b - 1.0).abs());
    }
    let ends = time_switch(tl, tl, ts)? == (1.0, 0.0) && time_switch(ts, tl, ts)? == (0.0, 1.0);
    let small = ReluNetwork::new(2, 8, 1, None, 1)?;
    let large = ReluNetwork::new(2, 8, 1, None, 2)?;
    let sw = TimeSwitchedScore::new(small.clone(), large.clone(), tl, ts)?;
    let x = [0.4, -0.3];
    let mut exact = true;
    for t in [0.01, 0.1, tl] {
        exact &= sw.forward(&x, t) == small.forward(&x, t);
    }
    for t in [ts, 1.0, 5.0] {
        exact &= sw.forward(&x, t) == large.forward(&x, t);
    }
    Ok(Verdict::new(
        worst < 1e-12 && inside && ends && exact,
        format!("max |SW_s + SW_l − 1| {worst:.1e} at 10^3 times; endpoints exact: {ends}; composition exact: {exact}"),
    ))
}

// ---------------------------------------------------------------- 10

fn c10(_: &mut Carry) -> Result<Verdict> {
    let cfg = ExperimentConfig::default().resolved()?;
    let density = cfg.density()?;
    let data = density.sample(64, 10, Execution::Sequential);
    let model = cfg.model_spec()?.build(2, 11)?;
    let tc = cfg.train_config()?;
    let seed = 12;
    let (_, g) = loss_gradient(&model, &data, &tc, seed, exec());
    let theta = model.params();
    let mut r = stream(10, 0);
    let step = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let v = gaussian_vec(&mut r, theta.len());
        let vn = norm(&v);
        let loss_at = |sgn: f64| -> Result<f64> {
            let mut m = model.clone();
            m.set_params(&theta.iter().zip(&v).map(|(a, b)| a + sgn * step * b / vn).collect::<Vec<_>>());
            dsm_loss(&data, &m, &tc.schedule, tc.k_times, tc.time_sampling, seed, exec())
        };
        let fd = (loss_at(1.0)? - loss_at(-1.0)?) / (2.0 * step);
        let an = dot(&g, &v) / vn;
        worst = worst.max((fd - an).abs() / an.abs());
    }
    Ok(Verdict::new(worst < 1e-4, format!("max relative error {worst:.1e} (< 1e-4), 5 directions, {} parameters", theta.len())))
}

// ---------------------------------------------------------------- 11, 12

fn fresh_w1(cfg: &ExperimentConfig, cloud: &PointCloud) -> Result<f64> {
    let fresh = cfg.density()?.sample(cloud.len(), derive_seed(cfg.seed, &[9]), exec());
    wasserstein1_with(cloud, &fresh, exec())
}

fn c11(carry: &mut Carry) -> Result<Verdict> {
    let cfg = ExperimentConfig::default().resolved()?;
    let oracle = cfg.oracle()?;
    let sc = cfg.sampler_config()?;
    let run = backward_sample(&oracle, &sc, 512, exec())?;
    let w1 = fresh_w1(&cfg, &run.cloud)?;
    carry.oracle_w1 = Some(w1);
    // references at the same m: exact draws of X_t0, and plain data
    let density = cfg.density()?;
    let a = density.sample(512, derive_seed(cfg.seed, &[100]), exec());
    let exact_rows: Vec<Vec<f64>> =
        a.rows().enumerate().map(|(i, x)| perturb(x, cfg.schedule.t0, derive_seed(cfg.seed, &[102]), i as u64)).collect();
    let exact = fresh_w1(&cfg, &PointCloud::from_rows(2, &exact_rows))?;
    let floor = fresh_w1(&cfg, &a)?;
    Ok(Verdict::new(
        w1 <= 0.08,
        format!(
            "W1 {w1:.4} (≤ 0.08), {} steps {:?} grid, {} aborted; same fresh cloud vs exact X_t0 draws {exact:.4}, vs data {floor:.4}; √t0 = {:.4}",
            sc.n_steps,
            sc.grid,
            run.aborted,
            cfg.schedule.t0.sqrt()
        ),
    ))
}

fn c12(carry: &mut Carry) -> Result<Verdict> {
    let base = match carry.oracle_w1 {
        Some(w) => w,
        None => {
            c11(carry)?;
            carry.oracle_w1.expect("set by criterion 11")
        }
    };
    let mut w = Vec::new();
    for seed in 0..3u64 {
        let mut cfg = ExperimentConfig::default().resolved()?;
        cfg.seed = seed;
        let density = cfg.density()?;
        let data = density.sample(cfg.train.n, derive_seed(seed, &[1]), exec());
        let model = cfg.model_spec()?.build(2, derive_seed(seed, &[2]))?;
        let (model, _) = train(&data, None, model, &cfg.train_config()?, exec())?;
        let run = backward_sample(&model, &cfg.sampler_config()?, 512, exec())?;
        w.push(fresh_w1(&cfg, &run.cloud)?);
    }
    let mean = w.iter().sum::<f64>() / 3.0;
    Ok(Verdict::new(
        mean <= 3.0 * base,
        format!(
            "mean W1 {mean:.4} over seeds 0..3 ({:.4}, {:.4}, {:.4}) ≤ 3 × oracle W1 {base:.4} = {:.4}",
            w[0],
            w[1],
            w[2],
            3.0 * base
        ),
    ))
}

// ---------------------------------------------------------------- 13

fn c13(_: &mut Carry) -> Result<Verdict> {
    let cfg = ExperimentConfig::default().resolved()?;
    let density = cfg.density()?;
    let oracle = cfg.oracle()?;
    let report = rate_experiment(&density, &oracle, &cfg.rate_settings()?, exec())?;
    for s in &report.summary {
        println!(
            "      n = {:>5}  W1 {:.4} ± {:.4}  oracle W1 {}  score L2 {}",
            s.n,
            s.w1_mean,
            s.w1_se,
            s.oracle_w1_mean.map_or("-".into(), |v| format!("{v:.4}")),
            s.score_l2_mean.map_or("-".into(), |v| format!("{v:.3}")),
        );
    }
    let failed = report.failed_cells();
    let (slope_ok, slope) = match &report.fit {
        Some(f) => (f.negative_with_confidence(), format!("slope {:.3}, 95% CI [{:.3}, {:.3}]", f.slope, f.ci95.0, f.ci95.1)),
        None => (false, format!("no fit: {}", report.fit_note.as_deref().unwrap_or("?"))),
    };
    let reference = mandiff::evaluation::w1_exponent(1.0, 1.0);
    Ok(Verdict::new(
        report.nonincreasing_within_se && slope_ok && failed == 0,
        format!(
            "nonincreasing within 1 joint se: {}; {slope}; failed cells {failed}; reference exponent −(β+1)/(d+2β): {:.3} at β = 1, {:.3} as β → ∞ (comparison only)",
            report.nonincreasing_within_se, reference, report.w1_exponent
        ),
    ))
}

// ---------------------------------------------------------------- 14

fn brute_force(a: &PointCloud, b: &PointCloud) -> f64 {
    let n = a.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    // Heap's algorithm
    let mut c = vec![0usize; n];
    let cost = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| dist(a.row(i), b.row(j))).sum::<f64>();
    best = best.min(cost(&perm));
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(cost(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best / n as f64
}

fn c14(_: &mut Carry) -> Result<Verdict> {
    let mut r = stream(14, 0);
    let cloud = |n: usize, dim: usize, r: &mut StreamRng| {
        PointCloud::from_rows(dim, &(0..n).map(|_| gaussian_vec(r, dim)).collect::<Vec<_>>())
    };
    // Tied permutations (common in 1-D) have equal true cost but may round
    // differently when summed, so agreement is counted in units of
    // rounding: bitwise equal, or within 4 ulp of the enumerated minimum.
    let (mut identical, mut mismatches, mut max_ulp) = (0, 0, 0.0f64);
    for i in 0..100 {
        let (n, dim) = (1 + i % 7, 1 + i % 3);
        let (a, b) = (cloud(n, dim, &mut r), cloud(n, dim, &mut r));
        let (x, y) = (wasserstein1_with(&a, &b, Execution::Sequential)?, brute_force(&a, &b));
        let ulp = (x - y).abs() / (y * f64::EPSILON);
        max_ulp = max_ulp.max(ulp);
        if x == y {
            identical += 1;
        } else if ulp > 4.0 {
            mismatches += 1;
        }
    }
    let (mut sym, mut tri, mut ident) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let (a, b, c) = (cloud(20, 2, &mut r), cloud(20, 2, &mut r), cloud(20, 2, &mut r));
        let w = |x: &PointCloud, y: &PointCloud| wasserstein1_with(x, y, Execution::Sequential);
        sym = sym.max((w(&a, &b)? - w(&b, &a)?).abs());
        tri = tri.max(w(&a, &c)? - w(&a, &b)? - w(&b, &c)?);
        ident = ident.max(w(&a, &a)?);
    }
    Ok(Verdict::new(
        mismatches == 0 && sym < 1e-12 && tri <= 1e-12 && ident == 0.0,
        format!("{identical} of 100 bitwise equal to enumeration, {mismatches} beyond rounding (max {max_ulp:.1} ulp); symmetry {sym:.1e}, triangle excess {tri:.1e}, W1(a,a) {ident}"),
    ))
}

// ----------------------------------------------------------------

type Check = fn(&mut Carry) -> Result<Verdict>;

fn main() {
    let criteria: [(usize, &str, Duration, Check); 14] = [
        (1, "oracle vs Bessel-ratio closed form (circle)", Duration::from_secs(5), c1),
        (2, "two-atom oracle equals mixture score", Duration::from_secs(2), c2),
        (3, "large-noise reconstruction and weights", Duration::from_secs(30), c3),
        (4, "small-noise reconstruction, orthogonality, ratio form", Duration::from_secs(30), c4),
        (5, "cross-term bound", Duration::from_secs(10), c5),
        (6, "linear-subspace degeneration", Duration::from_secs(2), c6),
        (7, "projection Jacobian identity", Duration::from_secs(5), c7),
        (8, "tube probability", Duration::from_secs(10), c8),
        (9, "time-switch partition", Duration::from_secs(1), c9),
        (10, "trainer gradient check", Duration::from_secs(10), c10),
        (11, "oracle-sampler pipeline", Duration::from_secs(120), c11),
        (12, "trained-model pipeline", Duration::from_secs(600), c12),
        (13, "rate direction", Duration::from_secs(45 * 60), c13),
        (14, "exact W1 solver", Duration::from_secs(10), c14),
    ];
    let only: Option<Vec<usize>> = std::env::var("MANDIFF_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let strict = std::env::var("MANDIFF_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");

    let mut carry = Carry::default();
    let (mut passed, mut run) = (0, 0);
    for (id, name, budget, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let verdict = check(&mut carry).unwrap_or_else(|e| Verdict::new(false, format!("error: {e}")));
        let took = start.elapsed();
        let in_time = took <= budget;
        let ok = verdict.passed && in_time;
        run += 1;
        passed += ok as usize;
        println!(
            "{} {:>2} {name}: {} [{:.1} s, budget {} s{}]",
            if ok { "PASS" } else { "FAIL" },
            id,
            verdict.detail,
            took.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
    }
    println!("acceptance: {passed}/{run} criteria passed");
    if strict && passed < run {
        std::process::exit(1);
    }
}
