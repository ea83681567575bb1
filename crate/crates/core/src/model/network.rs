use rand::Rng;

use crate::diffusion::{alpha, h};
use crate::error::{Error, Result};
use crate::linalg::{dist_sq, norm};
use crate::rng::{gaussian, stream};

/// Post-multiplier applied to the raw network output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputScale {
    /// `s = f(x, t)`.
    Identity,
    /// `s = f(x, t) / √h_t`.
    #[default]
    InvSqrtH,
    /// `s = f(x, t) / h_t`.
    InvH,
}

impl OutputScale {
    pub fn factor(self, ht: f64) -> f64 {
        match self {
            OutputScale::Identity => 1.0,
            OutputScale::InvSqrtH => 1.0 / ht.sqrt(),
            OutputScale::InvH => 1.0 / ht,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            OutputScale::Identity => 0,
            OutputScale::InvSqrtH => 1,
            OutputScale::InvH => 2,
        }
    }

    pub fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(OutputScale::Identity),
            1 => Ok(OutputScale::InvSqrtH),
            2 => Ok(OutputScale::InvH),
            _ => Err(Error::Checkpoint(format!("unknown output scale {c}"))),
        }
    }
}

/// `1` if `‖x − c‖² ≤ (1−ε)r̄²`, `0` if `‖x − c‖² ≥ r̄²`, linear in `‖x − c‖²`
/// in between, written with two ReLUs.
pub fn chart_indicator(x: &[f64], center: &[f64], r_bar: f64, eps: f64) -> f64 {
    let u = dist_sq(x, center);
    let lo = (1.0 - eps) * r_bar * r_bar;
    let den = r_bar * r_bar - lo;
    relu(1.0 - relu(u - lo) / den)
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Chart-indicator input features `1{x near α_t x_k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartFeatures {
    pub centers: Vec<Vec<f64>>,
    pub r_bar: f64,
    pub eps: f64,
}

/// Fully connected ReLU network `[x, t, α_t, h_t, features] → R^D` with an
/// output scale and a norm clip at `C_R / √h_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluNetwork {
    widths: Vec<usize>,
    params: Vec<f64>,
    weight_bound: f64,
    clip_const: f64,
    scale: OutputScale,
    features: Option<ChartFeatures>,
}

/// Per-layer activations kept for backpropagation.
struct Trace {
    /// Post-activation of every layer, starting with the input.
    acts: Vec<Vec<f64>>,
    scaled: Vec<f64>,
    factor: f64,
    radius: f64,
}

impl ReluNetwork {
    /// He-initialised network with `hidden` layers of width `width`.
    pub fn new(
        ambient_dim: usize,
        width: usize,
        hidden: usize,
        features: Option<ChartFeatures>,
        seed: u64,
    ) -> Result<Self> {
        if ambient_dim == 0 || width == 0 {
            return Err(Error::InvalidConfig("network needs positive ambient dimension and width".into()));
        }
        let input = ambient_dim + 3 + features.as_ref().map_or(0, |f| f.centers.len());
        let mut widths = vec![input];
        widths.extend(std::iter::repeat_n(width, hidden));
        widths.push(ambient_dim);
        let mut net = Self {
            params: vec![0.0; param_count(&widths)],
            widths,
            weight_bound: 100.0,
            clip_const: 10.0,
            scale: OutputScale::default(),
            features,
        };
        net.initialize(seed);
        Ok(net)
    }

    /// Network with explicit parameters (layout: per layer `W` row-major
    /// `out × in`, then `b`).
    pub fn from_parts(widths: Vec<usize>, params: Vec<f64>, features: Option<ChartFeatures>) -> Result<Self> {
        if widths.len() < 2 || params.len() != param_count(&widths) {
            return Err(Error::InvalidConfig(format!(
                "{} parameters do not match layer widths {widths:?}",
                params.len()
            )));
        }
        let extra = features.as_ref().map_or(0, |f| f.centers.len());
        if widths[0] != widths[widths.len() - 1] + 3 + extra {
            return Err(Error::InvalidConfig("input width must be D + 3 + #features".into()));
        }
        Ok(Self {
            widths,
            params,
            weight_bound: 100.0,
            clip_const: 10.0,
            scale: OutputScale::default(),
            features,
        })
    }

    pub fn with_weight_bound(mut self, b: f64) -> Self {
        self.weight_bound = b;
        self.clamp();
        self
    }

    /// `C_R` in the clip radius `R(t) = C_R / √h_t`.
    pub fn with_clip(mut self, c_r: f64) -> Self {
        self.clip_const = c_r;
        self
    }

    pub fn with_output_scale(mut self, scale: OutputScale) -> Self {
        self.scale = scale;
        self
    }

    fn initialize(&mut self, seed: u64) {
        let mut r = stream(seed, 0);
        let mut off = 0;
        for l in 0..self.widths.len() - 1 {
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let last = l + 2 == self.widths.len();
            let sd = if last { (1.0 / fan_in as f64).sqrt() } else { (2.0 / fan_in as f64).sqrt() };
            for w in &mut self.params[off..off + fan_in * fan_out] {
                *w = sd * gaussian(&mut r);
            }
            off += fan_in * fan_out + fan_out;
        }
        self.clamp();
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn ambient_dim(&self) -> usize {
        self.widths[self.widths.len() - 1]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn weight_bound(&self) -> f64 {
        self.weight_bound
    }

    pub fn clip_const(&self) -> f64 {
        self.clip_const
    }

    pub fn output_scale(&self) -> OutputScale {
        self.scale
    }

    pub fn features(&self) -> Option<&ChartFeatures> {
        self.features.as_ref()
    }

    /// Clamp every parameter to `[−B, B]`.
    pub fn clamp(&mut self) {
        let b = self.weight_bound;
        for p in &mut self.params {
            *p = p.clamp(-b, b);
        }
    }

    pub fn max_abs_param(&self) -> f64 {
        self.params.iter().fold(0.0, |m, p| m.max(p.abs()))
    }

    /// Clip radius `R(t)`.
    pub fn clip_radius(&self, t: f64) -> f64 {
        self.clip_const / h(t).sqrt()
    }

    fn input(&self, x: &[f64], t: f64) -> Vec<f64> {
        let (a, ht) = (alpha(t), h(t));
        let mut v = Vec::with_capacity(self.widths[0]);
        v.extend_from_slice(x);
        v.extend([t, a, ht]);
        if let Some(f) = &self.features {
            for c in &f.centers {
                let ac: Vec<f64> = c.iter().map(|v| a * v).collect();
                v.push(chart_indicator(x, &ac, f.r_bar, f.eps));
            }
        }
        v
    }

    fn trace(&self, x: &[f64], t: f64) -> Trace {
        let mut acts = vec![self.input(x, t)];
        let n_layers = self.widths.len() - 1;
        let mut off = 0;
        let mut raw = Vec::new();
        for l in 0..n_layers {
            let (fi, fo) = (self.widths[l], self.widths[l + 1]);
            let w = &self.params[off..off + fi * fo];
            let b = &self.params[off + fi * fo..off + fi * fo + fo];
            let prev = &acts[l];
            let mut out = Vec::with_capacity(fo);
            for o in 0..fo {
                let row = &w[o * fi..(o + 1) * fi];
                let z = b[o] + row.iter().zip(prev).map(|(a, b)| a * b).sum::<f64>();
                out.push(z);
            }
            off += fi * fo + fo;
            if l + 1 == n_layers {
                raw = out;
            } else {
                acts.push(out.into_iter().map(relu).collect());
            }
        }
        let ht = h(t);
        let factor = self.scale.factor(ht);
        let scaled: Vec<f64> = raw.iter().map(|v| v * factor).collect();
        Trace { acts, scaled, factor, radius: self.clip_const / ht.sqrt() }
    }

    /// Clipped network output.
    pub fn forward(&self, x: &[f64], t: f64) -> Vec<f64> {
        let tr = self.trace(x, t);
        clip(tr.scaled, tr.radius)
    }

    /// Adds `∂/∂θ ⟨g, s(x,t)⟩` to `grad` and returns `s(x,t)`.
    pub fn backward(&self, x: &[f64], t: f64, upstream: &dyn Fn(&[f64]) -> Vec<f64>, grad: &mut [f64]) -> Vec<f64> {
        let tr = self.trace(x, t);
        let n = norm(&tr.scaled);
        let out = clip(tr.scaled.clone(), tr.radius);
        let g = upstream(&out);
        // through the clip y ↦ R y/‖y‖ when active
        let g_scaled: Vec<f64> = if n > tr.radius {
            let u: Vec<f64> = tr.scaled.iter().map(|v| v / n).collect();
            let ug: f64 = u.iter().zip(&g).map(|(a, b)| a * b).sum();
            g.iter().zip(&u).map(|(gi, ui)| tr.radius / n * (gi - ui * ug)).collect()
        } else {
            g
        };
        let mut delta: Vec<f64> = g_scaled.iter().map(|v| v * tr.factor).collect();
        let n_layers = self.widths.len() - 1;
        let mut offs = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            offs.push(off);
            off += self.widths[l] * self.widths[l + 1] + self.widths[l + 1];
        }
        for l in (0..n_layers).rev() {
            let (fi, fo) = (self.widths[l], self.widths[l + 1]);
            let o = offs[l];
            let prev = &tr.acts[l];
            for r in 0..fo {
                let d = delta[r];
                if d != 0.0 {
                    let row = &mut grad[o + r * fi..o + (r + 1) * fi];
                    for (gw, a) in row.iter_mut().zip(prev) {
                        *gw += d * a;
                    }
                    grad[o + fi * fo + r] += d;
                }
            }
            if l > 0 {
                let w = &self.params[o..o + fi * fo];
                let mut next = vec![0.0; fi];
                for r in 0..fo {
                    let d = delta[r];
                    if d != 0.0 {
                        for (nx, wv) in next.iter_mut().zip(&w[r * fi..(r + 1) * fi]) {
                            *nx += d * wv;
                        }
                    }
                }
                for (nx, a) in next.iter_mut().zip(prev) {
                    if *a <= 0.0 {
                        *nx = 0.0;
                    }
                }
                delta = next;
            }
        }
        out
    }

    /// Randomly perturb all parameters (used by tests and gradient checks).
    pub fn jitter<R: Rng + ?Sized>(&mut self, rng: &mut R, scale: f64) {
        for p in &mut self.params {
            *p += scale * gaussian(rng);
        }
        self.clamp();
    }
}

fn clip(mut v: Vec<f64>, radius: f64) -> Vec<f64> {
    let n = norm(&v);
    if n > radius {
        for x in &mut v {
            *x *= radius / n;
        }
    }
    v
}

pub fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}
