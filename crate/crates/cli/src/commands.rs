use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mandiff::config::ExperimentConfig;
use mandiff::decomposition::{interaction_terms, large_noise_threshold, small_noise_decompose, LargeNoise};
use mandiff::evaluation::{rate_experiment, sliced_wasserstein1_with, wasserstein1_with, EXACT_LIMIT};
use mandiff::invariants::{format_table, run_invariants, tube_point};
use mandiff::linalg::{max_abs, norm, sub};
use mandiff::model::checkpoint;
use mandiff::model::train;
use mandiff::par::Execution;
use mandiff::rng::{derive_seed, stream, uniform};
use mandiff::sampler::{backward_sample, manifold_proximity_stats};
use mandiff::{Error, Result};
use serde_json::json;

use crate::io::{read_points, write_cloud, write_csv, write_json};

pub struct Context {
    pub cfg: ExperimentConfig,
    pub exec: Execution,
    pub dir: PathBuf,
    pub out: PathBuf,
    pub points: Option<PathBuf>,
    pub t: Option<f64>,
    pub model: Option<PathBuf>,
}

pub struct Outcome {
    pub outputs: Vec<String>,
    pub details: serde_json::Value,
    /// Set by `invariants` when a check fails.
    pub failed_checks: bool,
}

impl Outcome {
    fn new(outputs: &[&str], details: serde_json::Value) -> Self {
        Self { outputs: outputs.iter().map(|s| s.to_string()).collect(), details, failed_checks: false }
    }
}

fn header(prefix: &str, d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("{prefix}{i}")).collect()
}

pub fn oracle_eval(ctx: &Context) -> Result<Outcome> {
    let path = ctx.points.as_ref().ok_or_else(|| Error::InvalidConfig("oracle-eval needs --points".into()))?;
    let t = ctx.t.ok_or_else(|| Error::InvalidConfig("oracle-eval needs --t".into()))?;
    let oracle = ctx.cfg.oracle()?;
    let d = oracle.manifold().ambient_dim();
    let pts = read_points(path, d)?;
    let rows: Vec<Vec<f64>> = pts.rows().map(|r| r.to_vec()).collect();
    let evals = oracle.batch(&rows, t, ctx.exec);
    let mut underflow = 0usize;
    let mut out = Vec::with_capacity(rows.len());
    for (x, e) in rows.iter().zip(evals) {
        let mut row = x.clone();
        row.push(t);
        match e {
            Ok(e) => {
                row.extend(&e.score);
                row.push(e.log_density);
            }
            Err(Error::Underflow { .. }) => {
                underflow += 1;
                row.extend(std::iter::repeat_n(f64::NAN, d + 1));
            }
            Err(e) => return Err(e),
        }
        out.push(row);
    }
    let mut h = header("x", d);
    h.push("t".into());
    h.extend(header("s", d));
    h.push("log_p".into());
    write_csv(&ctx.dir.join("scores.csv"), &h, out)?;
    Ok(Outcome::new(&["scores.csv"], json!({ "points": rows.len(), "t": t, "underflow": underflow })))
}

pub fn decompose_check(ctx: &Context) -> Result<Outcome> {
    let oracle = ctx.cfg.oracle()?;
    let atlas = ctx.cfg.atlas()?;
    let m = oracle.manifold();
    let ln = LargeNoise::new(&oracle, &atlas)?;
    let d = m.ambient_dim();
    let seed = derive_seed(ctx.cfg.seed, &[0x6463]);
    let times = [0.01, 0.05, 0.3, 1.5];
    let n = 100;
    let rows = ctx.exec.try_map(times.len() * n, |i| -> Result<Vec<f64>> {
        let t = times[i / n];
        let mut r = stream(seed, i as u64);
        let (x, _) = tube_point(m, t, 0.8 * uniform(&mut r), &mut r)?;
        let s = oracle.score_at(&x, t)?;
        let scale = norm(&s).max(1.0);
        let large = max_abs(&sub(&ln.decompose(&x, t)?.reconstruct(), &s)) / scale;
        let sn = small_noise_decompose(&oracle, &x, t)?;
        let small = max_abs(&sub(&sn.reconstruct(), &s)) / scale;
        let ratio = max_abs(&sub(&sn.s_on, &sn.s_on_ratio)) / scale;
        let x0 = m.sample_uniform(&mut r);
        let it = interaction_terms(&oracle, &x, t, &x0)?;
        let mut row = vec![t];
        row.extend(&x);
        row.extend([large, small, ratio, it.e1, it.e2, it.bound]);
        Ok(row)
    })?;
    let worst = |k: usize| rows.iter().map(|r| r[k]).fold(0.0, f64::max);
    let violations = rows.iter().filter(|r| r[d + 5].abs() > r[d + 6] + 1e-12 * r[d + 4].max(1.0)).count();
    let mut h = vec!["t".to_string()];
    h.extend(header("x", d));
    h.extend(["large_noise_err", "small_noise_err", "ratio_gap", "e1", "e2", "e2_bound"].map(String::from));
    // volume factors G_k and regime thresholds are measured and logged only
    let g_range = if m.intrinsic_dim() > 0 {
        oracle
            .density()
            .local_measures(&atlas, 32)
            .ok()
            .and_then(|lm| lm.first().map(|l| l.coords.clone()))
            .and_then(|c| atlas.volume_factor_range(&c).ok())
    } else {
        None
    };
    let beta = oracle.density().holder_beta();
    let details = json!({
        "charts": atlas.len(),
        "volume_factor_min": g_range.map(|g| g.0),
        "volume_factor_max": g_range.map(|g| g.1),
        "t_large_eps_0.1": large_noise_threshold(0.1, beta),
        "t_large_eps_0.01": large_noise_threshold(0.01, beta),
        "points": rows.len(),
        "max_large_noise_err": worst(d + 1),
        "max_small_noise_err": worst(d + 2),
        "max_ratio_gap": worst(d + 3),
        "cross_term_violations": violations,
    });
    println!("{}", serde_json::to_string_pretty(&details).unwrap_or_default());
    write_csv(&ctx.dir.join("decompose.csv"), &h, rows)?;
    Ok(Outcome::new(&["decompose.csv"], details))
}

pub fn invariants(ctx: &Context) -> Result<Outcome> {
    let rows = run_invariants(&ctx.cfg, ctx.exec)?;
    print!("{}", format_table(&rows));
    write_json(&ctx.dir.join("invariants.json"), &rows)?;
    let failed = rows.iter().filter(|r| !r.passed).count();
    let mut o = Outcome::new(&["invariants.json"], json!({ "checks": rows.len(), "failed": failed }));
    o.failed_checks = failed > 0;
    Ok(o)
}

pub fn train_cmd(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    let density = cfg.density()?;
    let data = density.sample(cfg.train.n, derive_seed(cfg.seed, &[1]), ctx.exec);
    let heldout = (cfg.train.heldout > 0).then(|| density.sample(cfg.train.heldout, derive_seed(cfg.seed, &[3]), ctx.exec));
    let model = cfg.model_spec()?.build(data.dim(), derive_seed(cfg.seed, &[2]))?;
    let tc = cfg.train_config()?;
    let (model, report) = train::train(&data, heldout.as_ref(), model, &tc, ctx.exec)?;
    checkpoint::save(&model, &ctx.dir.join("model.bin"))?;
    fs::write(ctx.dir.join("loss.csv"), report.to_csv())?;
    write_cloud(&ctx.dir.join("data.csv"), &data)?;
    Ok(Outcome::new(
        &["model.bin", "loss.csv", "data.csv"],
        json!({
            "n": data.len(),
            "epochs": tc.epochs,
            "steps": report.steps,
            "parameters": model.n_params(),
            "final_train_loss": report.train_loss.last(),
            "final_heldout_loss": report.heldout_loss.last().filter(|v| v.is_finite()),
        }),
    ))
}

pub fn sample_cmd(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    let sc = cfg.sampler_config()?;
    let n = cfg.sampler.n_samples;
    let density = cfg.density()?;
    let (run, source) = match &ctx.model {
        Some(p) => {
            let model = checkpoint::load(p)?;
            if model.dim() != density.manifold().ambient_dim() {
                return Err(Error::DimensionMismatch { expected: density.manifold().ambient_dim(), got: model.dim() });
            }
            (backward_sample(&model, &sc, n, ctx.exec)?, p.display().to_string())
        }
        None => {
            let oracle = cfg.oracle()?;
            (backward_sample(&oracle, &sc, n, ctx.exec)?, "oracle".to_string())
        }
    };
    write_cloud(&ctx.dir.join("samples.csv"), &run.cloud)?;
    let fresh = density.sample(run.cloud.len(), derive_seed(cfg.seed, &[9]), ctx.exec);
    let (w1, metric) = if run.cloud.len() <= EXACT_LIMIT {
        (wasserstein1_with(&run.cloud, &fresh, ctx.exec)?, "exact")
    } else {
        let k = cfg.evaluation.sliced_projections;
        (sliced_wasserstein1_with(&run.cloud, &fresh, k, cfg.seed, ctx.exec)?, "sliced")
    };
    let prox = manifold_proximity_stats(&run.cloud, density.manifold());
    let details = json!({
        "score": source,
        "samples": run.cloud.len(),
        "aborted": run.aborted,
        "n_steps": sc.n_steps,
        "grid": sc.grid,
        "t0": sc.schedule.t0,
        "t_end": sc.schedule.t_end,
        "w1_to_fresh_data": w1,
        "w1_metric": metric,
        "distance_to_manifold": prox,
    });
    write_json(&ctx.dir.join("summary.json"), &details)?;
    Ok(Outcome::new(&["samples.csv", "summary.json"], details))
}

pub fn rate_cmd(ctx: &Context) -> Result<Outcome> {
    let density = ctx.cfg.density()?;
    let oracle = ctx.cfg.oracle()?;
    let settings = ctx.cfg.rate_settings()?;
    let report = rate_experiment(&density, &oracle, &settings, ctx.exec)?;
    fs::write(ctx.dir.join("rate_report.json"), report.to_json() + "\n")?;
    fs::write(ctx.dir.join("rate.csv"), report.to_csv())?;
    print!("{}", rate_table(&report));
    Ok(Outcome::new(
        &["rate_report.json", "rate.csv"],
        json!({
            "failed_cells": report.failed_cells(),
            "slope": report.fit.as_ref().map(|f| f.slope),
            "nonincreasing_within_se": report.nonincreasing_within_se,
        }),
    ))
}

fn rate_table(r: &mandiff::evaluation::RateReport) -> String {
    let mut s = String::from("     n  ok   W1 mean    W1 se   oracle W1  score L2\n");
    for row in &r.summary {
        let _ = writeln!(
            s,
            "{:>6}  {:>2}  {:>8.4}  {:>7.4}  {:>9}  {:>8}",
            row.n,
            row.ok,
            row.w1_mean,
            row.w1_se,
            row.oracle_w1_mean.map_or("-".into(), |v| format!("{v:.4}")),
            row.score_l2_mean.map_or("-".into(), |v| format!("{v:.3}")),
        );
    }
    match &r.fit {
        Some(f) => {
            let _ = writeln!(s, "slope {:.3} (95% CI {:.3} .. {:.3})", f.slope, f.ci95.0, f.ci95.1);
        }
        None => s.push_str("slope undefined\n"),
    }
    if let Some(note) = &r.fit_note {
        let _ = writeln!(s, "note: {note}");
    }
    let _ = writeln!(s, "reference exponents: W1 {:.3}, score {:.3}", r.w1_exponent, r.score_exponent);
    s
}

fn section(out: &mut String, title: &str, body: &str) {
    let _ = writeln!(out, "## {title}\n\n```\n{}```\n", body);
}

/// Collect the outputs of earlier runs under `--out` into `report.md`.
pub fn report(ctx: &Context) -> Result<Outcome> {
    let mut md = String::from("# mandiff run report\n\n");
    let read = |p: &Path| fs::read_to_string(p).ok();
    let mut found = 0;
    if let Some(text) = read(&ctx.out.join("invariants/invariants.json")) {
        let rows: Vec<serde_json::Value> = serde_json::from_str(&text).map_err(|e| Error::Io(e.to_string()))?;
        let mut body = String::new();
        for r in rows {
            let ok = if r["passed"].as_bool() == Some(true) { "PASS" } else { "FAIL" };
            let _ = writeln!(body, "{ok}  {}", r["name"].as_str().unwrap_or("?"));
        }
        section(&mut md, "Invariants", &body);
        found += 1;
    }
    if let Some(text) = read(&ctx.out.join("train/loss.csv")) {
        let lines: Vec<&str> = text.lines().collect();
        let body = format!("{}\n{}\n", lines[0], lines.last().unwrap_or(&""));
        section(&mut md, "Training (last epoch)", &body);
        found += 1;
    }
    if let Some(text) = read(&ctx.out.join("sample/summary.json")) {
        section(&mut md, "Sampling", &(text.trim_end().to_string() + "\n"));
        found += 1;
    }
    if let Some(text) = read(&ctx.out.join("rate/rate_report.json")) {
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Io(e.to_string()))?;
        let mut body = String::from("n,w1_mean,w1_se,oracle_w1_mean,score_l2_mean\n");
        for s in v["summary"].as_array().into_iter().flatten() {
            let _ = writeln!(body, "{},{},{},{},{}", s["n"], s["w1_mean"], s["w1_se"], s["oracle_w1_mean"], s["score_l2_mean"]);
        }
        let _ = writeln!(body, "fit: {}", v["fit"]);
        section(&mut md, "Rate sweep", &body);
        found += 1;
    }
    if found == 0 {
        return Err(Error::InvalidConfig(format!("no run outputs found under {}", ctx.out.display())));
    }
    fs::write(ctx.dir.join("report.md"), &md)?;
    print!("{md}");
    Ok(Outcome::new(&["report.md"], json!({ "sections": found })))
}
