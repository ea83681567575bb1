//! Invariant suite for a configured manifold and density, as run by the
//! `invariants` subcommand.

use rand::Rng;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::decomposition::{interaction_terms, small_noise_decompose, LargeNoise};
use crate::density::ManifoldDensity;
use crate::diffusion::{alpha, tube_hit_rate, DiffusionSchedule};
use crate::error::Result;
use crate::evaluation::{wasserstein1_with, PointCloud};
use crate::geometry::{Atlas, EmbeddedManifold, ManifoldKind};
use crate::linalg::{dot, max_abs, norm, sub};
use crate::model::{dsm_loss, loss_gradient, time_switch, ReluNetwork, ScoreModel, TimeSampling, TrainConfig};
use crate::oracle::Oracle;
use crate::par::Execution;
use crate::rng::{derive_seed, gaussian_vec, stream, uniform};
use crate::tol::TOL;

/// One line of the pass/fail table. `value` is the worst observed quantity
/// and is compared against `limit`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
    pub note: String,
}

impl CheckRow {
    fn below(name: &str, value: f64, limit: f64, note: impl Into<String>) -> Self {
        Self { name: name.into(), value, limit, passed: value < limit, note: note.into() }
    }

    fn skipped(name: &str, why: &str) -> Self {
        Self { name: name.into(), value: 0.0, limit: 0.0, passed: true, note: format!("skipped: {why}") }
    }

    fn failed(name: &str, err: &crate::Error) -> Self {
        Self { name: name.into(), value: f64::NAN, limit: 0.0, passed: false, note: format!("{}: {err}", err.kind()) }
    }
}

pub fn format_table(rows: &[CheckRow]) -> String {
    let w = rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(5);
    let mut s = format!("{:<w$}  {:<4}  {:>11}  {:>9}  note\n", "check", "ok", "value", "limit");
    for r in rows {
        s.push_str(&format!(
            "{:<w$}  {:<4}  {:>11.3e}  {:>9.1e}  {}\n",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.value,
            r.limit,
            r.note
        ));
    }
    s
}

/// A point `α_t (p + u)` with `p` on `M` and `u` normal at `p`,
/// `‖u‖ = frac · τ` (or `frac` for infinite reach).
pub fn tube_point<R: Rng + ?Sized>(m: &EmbeddedManifold, t: f64, frac: f64, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
    let p = m.sample_uniform(rng);
    let frame = m.tangent_frame(&p)?;
    let tau = if m.has_finite_reach() { m.reach() } else { 1.0 };
    let u = loop {
        let g = gaussian_vec(rng, m.ambient_dim());
        let n = sub(&g, &frame.project(&g));
        let nn = norm(&n);
        if nn > 1e-8 {
            break n.iter().map(|v| frac * tau * v / nn).collect::<Vec<_>>();
        }
    };
    let a = alpha(t);
    Ok((p.iter().zip(&u).map(|(pi, ui)| a * (pi + ui)).collect(), p))
}

fn guard(name: &str, f: impl FnOnce() -> Result<CheckRow>) -> CheckRow {
    f().unwrap_or_else(|e| CheckRow::failed(name, &e))
}

const TIMES: [f64; 3] = [0.05, 0.3, 1.5];

fn partition_of_unity(atlas: &Atlas, seed: u64) -> Result<CheckRow> {
    let m = atlas.manifold();
    let mut r = stream(seed, 0);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let p = m.sample_uniform(&mut r);
        let rho = atlas.partition_of_unity(&p)?;
        if rho.iter().any(|v| *v < 0.0) {
            worst = f64::INFINITY;
        }
        worst = worst.max((rho.iter().sum::<f64>() - 1.0).abs());
    }
    Ok(CheckRow::below("partition of unity", worst, 1e-10, format!("{} charts, 10^4 points", atlas.len())))
}

fn exp_log_round_trip(m: &EmbeddedManifold, seed: u64) -> Result<CheckRow> {
    if m.intrinsic_dim() == 0 {
        return Ok(CheckRow::skipped("exp/log round trip", "point set"));
    }
    let mut r = stream(seed, 1);
    let cap = if m.has_finite_reach() { 0.9 * m.injectivity_bound() } else { 1.0 };
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let p = m.sample_uniform(&mut r);
        let f = m.tangent_frame(&p)?;
        let g = gaussian_vec(&mut r, m.intrinsic_dim());
        let len = cap * uniform(&mut r);
        let v: Vec<f64> = f.lift(&g).iter().map(|x| x * len / norm(&g)).collect();
        let q = m.exp(&p, &v)?;
        worst = worst.max(max_abs(&sub(&m.log(&p, &q)?, &v)));
        let q2 = m.exp(&p, &m.log(&p, &q)?)?;
        worst = worst.max(max_abs(&sub(&q2, &q)));
    }
    Ok(CheckRow::below("exp/log round trip", worst, 1e-9, "200 pairs"))
}

fn projection_checks(m: &EmbeddedManifold, seed: u64) -> Result<Vec<CheckRow>> {
    let mut r = stream(seed, 2);
    let (mut orth, mut jac) = (0.0f64, 0.0f64);
    let step = 1e-5;
    for i in 0..200 {
        let t = TIMES[i % 3];
        let (x, p) = tube_point(m, t, 0.5 * uniform(&mut r), &mut r)?;
        let proj = m.project(&x, t)?;
        let res = sub(&x, &proj);
        for u in m.tangent_frame(&p)?.columns() {
            orth = orth.max(dot(&res, u).abs());
        }
        // J_Π (x − Π) by central differences along the residual
        let n = norm(&res);
        if n > 0.0 {
            let dir: Vec<f64> = res.iter().map(|v| v / n).collect();
            let plus: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + step * b).collect();
            let minus: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a - step * b).collect();
            let d = sub(&m.project(&plus, t)?, &m.project(&minus, t)?);
            jac = jac.max(norm(&d) / (2.0 * step) * n);
        }
    }
    Ok(vec![
        CheckRow::below("projection residual ⟂ tangent", orth, 1e-8, "200 tube points"),
        CheckRow::below("projection Jacobian identity", jac, 1e-4, "central differences, step 1e-5"),
    ])
}

fn density_mass(d: &ManifoldDensity) -> Result<CheckRow> {
    let res = 2 * d.resolution();
    if d.rule() == crate::density::QuadratureRule::MonteCarlo {
        return Ok(CheckRow::skipped("density integrates to 1", "Monte-Carlo volume nodes"));
    }
    let v = (d.integral(res)? - 1.0).abs();
    Ok(CheckRow::below("density integrates to 1", v, 1e-6, format!("refined resolution {res}")))
}

fn oracle_gradient(o: &Oracle, seed: u64) -> Result<CheckRow> {
    let m = o.manifold();
    let mut r = stream(seed, 3);
    let mut worst = 0.0f64;
    for i in 0..30 {
        let t = TIMES[i % 3];
        let (x, _) = tube_point(m, t, 0.5 * uniform(&mut r), &mut r)?;
        let s = o.score_at(&x, t)?;
        let scale = norm(&s).max(1.0);
        for j in 0..x.len() {
            let step = 1e-5;
            let mut a = x.clone();
            let mut b = x.clone();
            a[j] += step;
            b[j] -= step;
            let fd = (o.log_marginal_density(&a, t)? - o.log_marginal_density(&b, t)?) / (2.0 * step);
            worst = worst.max((fd - s[j]).abs() / scale);
        }
    }
    Ok(CheckRow::below("oracle score = ∇log p_t", worst, 1e-5, "central differences, 30 points"))
}

fn decomposition_checks(o: &Oracle, atlas: &Atlas, seed: u64) -> Result<Vec<CheckRow>> {
    let m = o.manifold();
    let mut rows = Vec::new();
    let mut r = stream(seed, 4);
    let ln = LargeNoise::new(o, atlas)?;
    let (mut rec, mut wsum, mut wneg) = (0.0f64, 0.0f64, false);
    for i in 0..200 {
        let t = TIMES[i % 3];
        let (x, _) = tube_point(m, t, 0.8 * uniform(&mut r), &mut r)?;
        let d = ln.decompose(&x, t)?;
        let s = o.score_at(&x, t)?;
        rec = rec.max(max_abs(&sub(&d.reconstruct(), &s)) / norm(&s).max(1.0));
        wsum = wsum.max((d.weights.iter().sum::<f64>() - 1.0).abs());
        wneg |= d.weights.iter().any(|w| *w < 0.0);
    }
    rows.push(CheckRow::below("large-noise reconstruction", rec, 1e-8, format!("{} charts, 200 points", atlas.len())));
    rows.push(CheckRow::below("large-noise weights sum to 1", if wneg { f64::INFINITY } else { wsum }, 1e-10, ""));

    let (mut rec, mut orth, mut ratio) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..200 {
        let t = TIMES[i % 3];
        let (x, p) = tube_point(m, t, 0.5 * uniform(&mut r), &mut r)?;
        let d = small_noise_decompose(o, &x, t)?;
        let scale = norm(&d.oracle_score).max(1.0);
        rec = rec.max(max_abs(&sub(&d.reconstruct(), &d.oracle_score)) / scale);
        for u in m.tangent_frame(&p)?.columns() {
            orth = orth.max(dot(&d.s_perp, u).abs() / scale);
        }
        ratio = ratio.max(max_abs(&sub(&d.s_on, &d.s_on_ratio)) / scale);
    }
    rows.push(CheckRow::below("small-noise reconstruction", rec, 1e-8, "200 tube points"));
    rows.push(CheckRow::below("small-noise s_⊥ ⟂ tangent", orth, 1e-8, ""));
    rows.push(CheckRow::below("small-noise ratio = residual form", ratio, 1e-8, ""));

    let nodes = o.nodes();
    let mut violations = 0usize;
    for i in 0..10_000 {
        let t = TIMES[i % 3];
        let (x, _) = tube_point(m, t, 0.9 * uniform(&mut r), &mut r)?;
        let k = ((uniform(&mut r) * nodes.len() as f64) as usize).min(nodes.len() - 1);
        if !interaction_terms(o, &x, t, nodes.node(k))?.holds() {
            violations += 1;
        }
    }
    rows.push(CheckRow::below("cross-term bound violations", violations as f64, 0.5, "10^4 triples"));
    Ok(rows)
}

fn tube_probability(d: &ManifoldDensity, delta: f64, seed: u64, exec: Execution) -> Result<CheckRow> {
    let s = tube_hit_rate(d, 0.1, delta, 10_000, seed, exec)?;
    let margin = s.rate() - (s.bound - 3.0 * s.sigma());
    Ok(CheckRow {
        name: "tube probability".into(),
        value: s.rate(),
        limit: s.bound - 3.0 * s.sigma(),
        passed: margin >= 0.0,
        note: format!("δ = {delta}, 10^4 trials, rate ≥ 1 − δ^D − 3σ"),
    })
}

fn switch_partition() -> Result<CheckRow> {
    let (tl, ts) = (0.2, 0.7);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let t = 1e-3 + (3.0 - 1e-3) * i as f64 / 999.0;
        let (a, b) = time_switch(t, tl, ts)?;
        if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) {
            worst = f64::INFINITY;
        }
        worst = worst.max((a + b - 1.0).abs());
    }
    let ends = time_switch(tl, tl, ts)? == (1.0, 0.0) && time_switch(ts, tl, ts)? == (0.0, 1.0);
    Ok(CheckRow::below("time switch partition", if ends { worst } else { f64::INFINITY }, 1e-12, "10^3 times"))
}

fn brute_force_w1(a: &PointCloud, b: &PointCloud) -> f64 {
    fn go(a: &PointCloud, b: &PointCloud, i: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if i == a.len() {
            *best = best.min(acc);
            return;
        }
        for j in 0..b.len() {
            if !used[j] {
                used[j] = true;
                go(a, b, i + 1, used, acc + crate::linalg::dist(a.row(i), b.row(j)), best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(a, b, 0, &mut vec![false; b.len()], 0.0, &mut best);
    best / a.len() as f64
}

fn w1_checks(seed: u64) -> Result<Vec<CheckRow>> {
    let mut r = stream(seed, 5);
    let cloud = |n: usize, r: &mut crate::rng::StreamRng| {
        PointCloud::from_rows(2, &(0..n).map(|_| gaussian_vec(r, 2)).collect::<Vec<_>>())
    };
    let mut brute = 0.0f64;
    for i in 0..100 {
        let n = 1 + i % 7;
        let (a, b) = (cloud(n, &mut r), cloud(n, &mut r));
        let exact = wasserstein1_with(&a, &b, Execution::Sequential)?;
        brute = brute.max((exact - brute_force_w1(&a, &b)).abs());
    }
    let (mut sym, mut tri) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let (a, b, c) = (cloud(12, &mut r), cloud(12, &mut r), cloud(12, &mut r));
        let ab = wasserstein1_with(&a, &b, Execution::Sequential)?;
        let ba = wasserstein1_with(&b, &a, Execution::Sequential)?;
        let bc = wasserstein1_with(&b, &c, Execution::Sequential)?;
        let ac = wasserstein1_with(&a, &c, Execution::Sequential)?;
        sym = sym.max((ab - ba).abs());
        tri = tri.max(ac - ab - bc);
    }
    Ok(vec![
        CheckRow::below("W1 = brute force (n ≤ 7)", brute, 1e-12, "100 instances"),
        CheckRow::below("W1 symmetry", sym, 1e-12, "100 pairs"),
        CheckRow::below("W1 triangle excess", tri, 1e-10, "100 triples"),
    ])
}

fn gradient_check(d: &ManifoldDensity, schedule: DiffusionSchedule, seed: u64) -> Result<CheckRow> {
    let data = d.sample(16, derive_seed(seed, &[6]), Execution::Sequential);
    let net = ReluNetwork::new(data.dim(), 8, 2, None, derive_seed(seed, &[7]))?;
    let model = ScoreModel::Plain(net);
    let cfg = TrainConfig::new(schedule, 1, 0);
    let loss_seed = derive_seed(seed, &[8]);
    let (_, g) = loss_gradient(&model, &data, &cfg, loss_seed, Execution::Sequential);
    let theta = model.params();
    let mut r = stream(seed, 9);
    let step = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let v = gaussian_vec(&mut r, theta.len());
        let vn = norm(&v);
        let v: Vec<f64> = v.iter().map(|x| x / vn).collect();
        let eval = |sgn: f64| -> Result<f64> {
            let mut m = model.clone();
            m.set_params(&theta.iter().zip(&v).map(|(a, b)| a + sgn * step * b).collect::<Vec<_>>());
            dsm_loss(&data, &m, &schedule, cfg.k_times, TimeSampling::Uniform, loss_seed, Execution::Sequential)
        };
        let fd = (eval(1.0)? - eval(-1.0)?) / (2.0 * step);
        let an = dot(&g, &v);
        worst = worst.max((fd - an).abs() / an.abs().max(1e-8));
    }
    Ok(CheckRow::below("DSM gradient vs finite differences", worst, 1e-4, "5 directions, step 1e-5"))
}

/// Run every check that applies to the configured manifold.
pub fn run_invariants(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<CheckRow>> {
    let m = cfg.manifold()?;
    let density = cfg.density()?;
    let oracle = cfg.oracle()?;
    let schedule = cfg.schedule()?;
    let seed = derive_seed(cfg.seed, &[0x696e76]);
    let mut rows = Vec::new();
    let atlas = cfg.atlas();
    match &atlas {
        Ok(a) => {
            rows.push(guard("partition of unity", || partition_of_unity(a, seed)));
            let worst = a.charts().iter().map(|c| c.frame.orthonormality_defect()).fold(0.0, f64::max);
            rows.push(CheckRow::below("chart frames orthonormal", worst, TOL.orthonormal, ""));
        }
        Err(e) => rows.push(CheckRow::failed("atlas", e)),
    }
    rows.push(guard("exp/log round trip", || exp_log_round_trip(&m, seed)));
    match projection_checks(&m, seed) {
        Ok(r) => rows.extend(r),
        Err(e) => rows.push(CheckRow::failed("projection", &e)),
    }
    rows.push(guard("density integrates to 1", || density_mass(&density)));
    rows.push(guard("oracle score = ∇log p_t", || oracle_gradient(&oracle, seed)));
    if let Ok(a) = &atlas {
        match decomposition_checks(&oracle, a, seed) {
            Ok(r) => rows.extend(r),
            Err(e) => rows.push(CheckRow::failed("decompositions", &e)),
        }
    }
    if matches!(m.kind(), ManifoldKind::LinearSubspace { .. }) {
        rows.push(guard("linear split", || {
            let mut r = stream(seed, 10);
            let mut worst = 0.0f64;
            for i in 0..200 {
                let t = TIMES[i % 3];
                let x = gaussian_vec(&mut r, m.ambient_dim());
                let d = crate::decomposition::linear_subspace_decompose(&oracle, &x, t)?;
                let s = oracle.score_at(&x, t)?;
                worst = worst.max(max_abs(&sub(&d.reconstruct(), &s)) / norm(&s).max(1.0));
            }
            Ok(CheckRow::below("linear split reconstruction", worst, 1e-10, "200 points"))
        }));
    }
    rows.push(guard("tube probability", || tube_probability(&density, cfg.schedule.delta, seed, exec)));
    rows.push(guard("time switch partition", switch_partition));
    match w1_checks(seed) {
        Ok(r) => rows.extend(r),
        Err(e) => rows.push(CheckRow::failed("W1", &e)),
    }
    rows.push(guard("DSM gradient vs finite differences", || gradient_check(&density, schedule, seed)));
    Ok(rows)
}
