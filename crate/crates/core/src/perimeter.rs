//! Heat-content deficit ‖P_t 1_E - 1_E‖₁, the fractional perimeter ‖(-𝒜)^s 1_E‖₁, the
//! lower bound on the deficit, the interpolation argument behind the isoperimetric
//! inequalities, ratio sweeps and the upper bound through sup τ^{-1/2}·deficit.

use crate::error::{KfpError, Result};
use crate::fractional::FracQuadSpec;
use crate::matlin::{sym_spectrum, SquareMatrix};
use crate::mc::{mix64, stream, Accum, MCEstimate, McConfig};
use crate::operator::{
    covariance, default_time_grid, density_with, intrinsic_dimensions, kernel_constant, omega, CovarianceBundle,
    OperatorSpec, Regime,
};
use crate::quad::{gauss_legendre, golden_section, integrate_to_infinity, log_panels};
use crate::region::{BBox, Region, Shell};
use crate::semigroup::sample_forward;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

/// Batches of a sample set. Fixed so results do not depend on the worker count; the
/// spread of per-batch values gives the error of nonlinear functionals of the curve.
pub(crate) const BATCHES: usize = 32;

/// Weight of the uniform component of the proposal for outer points.
const UNIFORM_WEIGHT: f64 = 0.1;

/// Shell width in kernel standard deviations.
const SHELL_SIGMAS: f64 = 5.0;

/// a_N with ∫ p(X,Y,t)² dX = a_N e^{-t tr B} / V(t).
pub fn a_const(n: usize) -> f64 {
    let c = kernel_constant(n);
    c * c * (2.0 * PI).powf(n as f64 / 2.0) / omega(n)
}

/// b_N = 2 a_N, the constant of the deficit lower bound.
pub fn b_const(n: usize) -> f64 {
    2.0 * a_const(n)
}

/// Everything needed to estimate ∫_E P_t 1_{E^c} at one time.
struct DeficitNode {
    cb: CovarianceBundle,
    width: f64,
    shell_measure: f64,
    mass: f64,
}

impl DeficitNode {
    fn new(spec: &OperatorSpec, region: &Region, t: f64) -> Result<Self> {
        let cb = covariance(spec, t)?;
        let spread = sym_spectrum(&cb.tk.scale(2.0))?.max_eig.max(0.0).sqrt();
        let bb = region.bbox();
        let reach = bb.lo.iter().chain(&bb.hi).fold(0.0f64, |m, v| m.max(v.abs()));
        let drift = cb.exp_tb.sub(&SquareMatrix::identity(spec.dim)).norm1() * reach;
        let width = SHELL_SIGMAS * spread + drift;
        let shell_measure = region.shell(width).measure();
        Ok(Self { cb, width, shell_measure, mass: (-t * spec.trace_b()).exp() })
    }
}

/// Per-sample estimator of J(t) = ∫_E P_t 1_{E^c}. Outer points come from
/// λ·U(E) + (1-λ)·U(shell), the shell being the inner boundary layer whose width
/// follows the kernel spread; one forward draw per outer point.
///
/// The single inner draw is enough: 1{Y ∉ E}/q(X) is unbiased for J and its variance
/// is at most J·|E|/λ, so extra inner draws would only pay off when outer variance
/// dominates, which the shell already suppresses.
fn outer_inner_draw(
    region: &Region,
    shell: &Shell<'_>,
    node: &DeficitNode,
    rng: &mut impl Rng,
    x: &mut [f64],
    y: &mut [f64],
) -> f64 {
    let measure = region.measure();
    if rng.random::<f64>() < UNIFORM_WEIGHT {
        region.sample_uniform(rng, x);
    } else {
        shell.sample(rng, x);
    }
    let q = UNIFORM_WEIGHT / measure + if shell.contains(x) { (1.0 - UNIFORM_WEIGHT) / node.shell_measure } else { 0.0 };
    sample_forward(&node.cb, x, rng, y);
    if region.contains(y) {
        0.0
    } else {
        1.0 / q
    }
}

/// Deficit estimates at every time for every sample, reduced to per-batch accumulators
/// ([batch][node]). Sample i uses its own stream at every node (common random numbers),
/// which keeps the curve smooth in t.
fn deficit_batches(spec: &OperatorSpec, region: &Region, times: &[f64], cfg: &McConfig) -> Result<Vec<Vec<Accum>>> {
    if cfg.n == 0 {
        return Err(KfpError::Domain("sample count must be positive".into()));
    }
    if region.dim() != spec.dim {
        return Err(KfpError::InvalidInput("region and operator differ in dimension".into()));
    }
    let nodes = times.iter().map(|&t| DeficitNode::new(spec, region, t)).collect::<Result<Vec<_>>>()?;
    let shells: Vec<Shell<'_>> = nodes.iter().map(|nd| region.shell(nd.width)).collect();
    let measure = region.measure();
    let key = mix64(cfg.seed ^ 0xDEF1_C1E7);
    let n = cfg.n;
    let dim = spec.dim;
    Ok((0..BATCHES)
        .into_par_iter()
        .map(|b| {
            let (lo, hi) = (b * n / BATCHES, (b + 1) * n / BATCHES);
            let mut acc = vec![Accum::default(); nodes.len()];
            let (mut x, mut y) = (vec![0.0; dim], vec![0.0; dim]);
            for i in lo..hi {
                for ((a, node), shell) in acc.iter_mut().zip(&nodes).zip(&shells) {
                    let mut rng = stream(key, i as u64);
                    let j = outer_inner_draw(region, shell, node, &mut rng, &mut x, &mut y);
                    a.push((node.mass - 1.0) * measure + 2.0 * j);
                }
            }
            acc
        })
        .collect())
}

pub(crate) fn merge_batches(batches: &[Vec<Accum>]) -> Vec<Accum> {
    let mut total = vec![Accum::default(); batches[0].len()];
    for b in batches {
        for (t, a) in total.iter_mut().zip(b) {
            t.merge(a);
        }
    }
    total
}

/// ‖P_t 1_E - 1_E‖₁ = (e^{-t tr B} - 1)|E| + 2 ∫_E P_t 1_{E^c}.
pub fn heat_content_deficit(spec: &OperatorSpec, region: &Region, t: f64, cfg: &McConfig) -> Result<MCEstimate> {
    if !(t > 0.0) {
        return Err(KfpError::Domain(format!("deficit needs t > 0, got {t}")));
    }
    let b = deficit_batches(spec, region, &[t], cfg)?;
    Ok(merge_batches(&b)[0].estimate(cfg.seed))
}

/// Same quantity by direct sampling of ∫|P_t 1_E - 1_E| over a box that covers every
/// point whose forward law reaches E: the single-draw estimator
/// 1{X∈E}1{Y∉E} + 1{X∉E}1{Y∈E} is unbiased for the integrand.
pub fn heat_content_deficit_direct(spec: &OperatorSpec, region: &Region, t: f64, cfg: &McConfig) -> Result<MCEstimate> {
    if cfg.n == 0 {
        return Err(KfpError::Domain("sample count must be positive".into()));
    }
    let cb = covariance(spec, t)?;
    let bbox = covering_box(spec, region, &cb)?;
    let vol = bbox.volume();
    let n = spec.dim;
    let acc = crate::mc::run_blocks(cfg, |rng, m, acc| {
        let (mut x, mut y) = (vec![0.0; n], vec![0.0; n]);
        for _ in 0..m {
            bbox.sample(rng, &mut x);
            sample_forward(&cb, &x, rng, &mut y);
            let hit = region.contains(&x) != region.contains(&y);
            acc.push(if hit { vol } else { 0.0 });
        }
    });
    Ok(acc.estimate(cfg.seed))
}

/// Bounding box of E and of the preimage under X ↦ e^{tB}X of E's box widened by
/// eight kernel deviations per axis.
fn covering_box(spec: &OperatorSpec, region: &Region, cb: &CovarianceBundle) -> Result<BBox> {
    let n = spec.dim;
    let margin: Vec<f64> = (0..n).map(|i| 8.0 * (2.0 * cb.tk.get(i, i)).sqrt()).collect();
    let target = region.bbox().expand(&margin);
    let inv = cb.exp_tb.inverse()?;
    let mut lo = target.lo.clone();
    let mut hi = target.hi.clone();
    let mut corner = vec![0.0; n];
    for mask in 0..(1usize << n) {
        for i in 0..n {
            corner[i] = if mask >> i & 1 == 1 { target.hi[i] } else { target.lo[i] };
        }
        let p = inv.mul_vec(&corner);
        for i in 0..n {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    Ok(BBox { lo, hi })
}

/// Computed fractional perimeter with its sampled deficit curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerimeterEstimate {
    pub s: f64,
    pub value: f64,
    pub quad_error: f64,
    pub mc_error: f64,
    /// (t, ‖P_t 1_E - 1_E‖₁) at the quadrature nodes, clipped to [0, (1+e^{-t tr B})|E|].
    pub deficit_curve: Vec<(f64, MCEstimate)>,
    /// Power c·t^β fitted to the smallest decade.
    pub near_exponent: f64,
    pub warnings: Vec<String>,
}

impl PerimeterEstimate {
    pub fn total_error(&self) -> f64 {
        self.quad_error + self.mc_error
    }

    /// sup over the curve of τ^{-1/2}·deficit.
    pub fn sup_scaled_deficit(&self) -> f64 {
        self.deficit_curve.iter().map(|(t, d)| d.value / t.sqrt()).fold(0.0, f64::max)
    }
}

/// Weighted least squares for ln d = ln c + β ln t. Returns (ln c, β).
fn power_fit(t: &[f64], d: &[f64], w: &[f64]) -> Option<(f64, f64)> {
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&ti, &di), &wi) in t.iter().zip(d).zip(w) {
        if di <= 0.0 || wi <= 0.0 {
            continue;
        }
        let (x, y) = (ti.ln(), di.ln());
        sw += wi;
        sx += wi * x;
        sy += wi * y;
        sxx += wi * x * x;
        sxy += wi * x * y;
    }
    let det = sw * sxx - sx * sx;
    if sw == 0.0 || det.abs() < 1e-300 {
        return None;
    }
    let beta = (sw * sxy - sx * sy) / det;
    Some(((sy - beta * sx) / sw, beta))
}

pub(crate) struct CurveRule {
    pub times: Vec<f64>,
    wk: Vec<f64>,
    wg: Vec<f64>,
    t_min: f64,
    pub t_max: f64,
}

pub(crate) fn curve_rule(q: &FracQuadSpec) -> CurveRule {
    let t_min = q.t_min();
    let t_max = q.split * 10f64.powi(q.far_decades as i32);
    let (mut times, mut wk, mut wg) = (vec![], vec![], vec![]);
    for p in log_panels(t_min, t_max, q.panels_per_decade) {
        for i in 0..15 {
            let t = p.nodes[i].exp();
            times.push(t);
            wk.push(p.wk[i] * t);
            wg.push(p.wg[i] * t);
        }
    }
    CurveRule { times, wk, wg, t_min, t_max }
}

/// Pieces of ∫ t^{-1-s} d(t) dt for one curve: (body K, body K - G, near, exponent).
fn integrate_curve(rule: &CurveRule, d: &[f64], s: f64) -> (f64, f64, f64, f64) {
    let mut body = 0.0;
    let mut diff = 0.0;
    for (j, &t) in rule.times.iter().enumerate() {
        let k = t.powf(-1.0 - s);
        body += rule.wk[j] * k * d[j];
        diff += (rule.wk[j] - rule.wg[j]) * k * d[j];
    }
    let first: Vec<usize> = (0..rule.times.len()).filter(|&j| rule.times[j] <= 10.0 * rule.t_min).collect();
    let ft: Vec<f64> = first.iter().map(|&j| rule.times[j]).collect();
    let fd: Vec<f64> = first.iter().map(|&j| d[j]).collect();
    let fw = vec![1.0; ft.len()];
    let (lnc, beta) = power_fit(&ft, &fd, &fw).unwrap_or((f64::NEG_INFINITY, 1.0));
    let e = beta.max(s + 1e-3) - s;
    let near = if lnc.is_finite() { lnc.exp() * rule.t_min.powf(e) / e } else { 0.0 };
    (body, diff, near, beta)
}

/// ∫₀^∞ t^{-1-s} d(t) dt for a sampled curve with d(t) → (1+e^{-t tr B})·mass at
/// infinity and |d(t) - (1+e^{-t tr B})·mass| ≤ 2c_N·pair_mass/V(t).
pub(crate) struct CurveIntegral {
    pub value: f64,
    pub quad_error: f64,
    pub mc_error: f64,
    pub beta: f64,
    pub warnings: Vec<String>,
}

pub(crate) fn curve_integral(
    spec: &OperatorSpec,
    rule: &CurveRule,
    batches: &[Vec<Accum>],
    s: f64,
    mass: f64,
    pair_mass: f64,
) -> Result<CurveIntegral> {
    let total = merge_batches(batches);
    let means: Vec<f64> = total.iter().map(|a| a.mean).collect();
    let trb = spec.trace_b();
    let (body, diff, near, beta) = integrate_curve(rule, &means, s);
    let mut warnings = vec![];
    if beta <= s {
        warnings.push(format!("small-time fit exponent {beta:.4} does not exceed s = {s}; near segment diverges"));
    }
    let t1 = rule.t_max;
    let upper = mass
        * (t1.powf(-s) / s
            + if trb == 0.0 {
                t1.powf(-s) / s
            } else {
                integrate_to_infinity(|t| (-t * trb).exp() * t.powf(-1.0 - s), t1, 1e-15, 1e-10).value
            });
    let corr = 2.0 * pair_mass * kernel_constant(spec.dim) * t1.powf(-s) / (s * covariance(spec, t1)?.volume);
    let tail = upper - 0.5 * corr.min(2.0 * upper);

    // Batch spread of body plus near piece. A batch holds too few samples to fit the
    // exponent on its own, so it only rescales the pooled power law.
    let first: Vec<usize> = (0..rule.times.len()).filter(|&j| rule.times[j] <= 10.0 * rule.t_min).collect();
    let shape: f64 = first.iter().map(|&j| rule.times[j].powf(beta)).sum();
    let pooled: f64 = first.iter().map(|&j| means[j]).sum();
    let per_batch: Vec<f64> = batches
        .iter()
        .map(|b| {
            let m: Vec<f64> = b.iter().map(|a| a.mean).collect();
            let (bb, _, _, _) = integrate_curve(rule, &m, s);
            let own: f64 = first.iter().map(|&j| m[j]).sum();
            let nn = if pooled > 0.0 && shape > 0.0 { near * own / pooled } else { 0.0 };
            bb + nn
        })
        .collect();
    let k = per_batch.len() as f64;
    let mean_b = per_batch.iter().sum::<f64>() / k;
    let var_b = per_batch.iter().map(|v| (v - mean_b).powi(2)).sum::<f64>() / (k - 1.0);
    Ok(CurveIntegral {
        value: body + near + tail,
        quad_error: diff.abs() + 0.5 * corr.min(2.0 * upper),
        mc_error: (var_b / k).sqrt(),
        beta,
        warnings,
    })
}

/// ‖(-𝒜)^s 1_E‖₁ = (s/Γ(1-s)) ∫₀^∞ t^{-1-s} ‖P_t 1_E - 1_E‖₁ dt.
///
/// The curve is sampled at the Gauss-Kronrod nodes of log-time panels. Below the first
/// node the deficit is extrapolated by a power law fitted to the smallest decade; above
/// the last node it is bracketed by (1+e^{-t tr B})|E| - 2c_N|E|²/V(t) ≤ d(t) ≤
/// (1+e^{-t tr B})|E| and the midpoint is used.
pub fn frac_perimeter(spec: &OperatorSpec, region: &Region, q: &FracQuadSpec, cfg: &McConfig) -> Result<PerimeterEstimate> {
    let s = q.s;
    if !(s > 0.0) {
        return Err(KfpError::Domain(format!("order s must be positive, got {s}")));
    }
    if s >= 0.5 {
        return Err(KfpError::Range(format!(
            "fractional perimeter needs s < 1/2 (got {s}); no nonempty open set has finite perimeter at s = 1/2"
        )));
    }
    spec.require_trace()?;
    let rule = curve_rule(q);
    let batches = deficit_batches(spec, region, &rule.times, cfg)?;
    let total = merge_batches(&batches);
    let measure = region.measure();
    let trb = spec.trace_b();
    let ci = curve_integral(spec, &rule, &batches, s, measure, measure * measure)?;
    let scale = s / gamma(1.0 - s);
    let (value, quad_error, mc_error) = (scale * ci.value, scale * ci.quad_error, scale * ci.mc_error);
    let (beta, warnings) = (ci.beta, ci.warnings);

    let deficit_curve = rule
        .times
        .iter()
        .zip(&total)
        .map(|(&t, a)| {
            let cap = (1.0 + (-t * trb).exp()) * measure;
            let mut e = a.estimate(cfg.seed);
            e.value = e.value.clamp(0.0, cap);
            (t, e)
        })
        .collect();
    Ok(PerimeterEstimate {
        s,
        value: value.max(0.0),
        quad_error,
        mc_error,
        deficit_curve,
        near_exponent: beta,
        warnings,
    })
}

/// ∫ p(X, Y, t)² dX by tensor Gauss-Legendre in whitened coordinates
/// X = e^{-tB}(Y - L w), L Lᵀ = 2tK.
pub fn kernel_square_integral(spec: &OperatorSpec, y: &[f64], t: f64, nodes: usize) -> Result<f64> {
    let n = spec.dim;
    let cb = covariance(spec, t)?;
    let inv = cb.exp_tb.inverse()?;
    let (gx, gw) = gauss_legendre(nodes);
    let half: f64 = 6.0;
    let jac = (-t * spec.trace_b()).exp() * (2f64.powi(n as i32) * cb.det_tk).sqrt() * half.powi(n as i32);
    let total = gx.len().pow(n as u32);
    let mut idx = vec![0usize; n];
    let (mut w, mut d, mut x) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut sum = 0.0;
    for k in 0..total {
        let mut r = k;
        let mut weight = 1.0;
        for i in 0..n {
            idx[i] = r % gx.len();
            r /= gx.len();
            w[i] = half * gx[idx[i]];
            weight *= gw[idx[i]];
        }
        cb.factor.mul_vec_into(&w, &mut d);
        for i in 0..n {
            d[i] = y[i] - d[i];
        }
        inv.mul_vec_into(&d, &mut x);
        let p = density_with(&cb, n, &x, y);
        sum += weight * p * p;
    }
    Ok(sum * jac)
}

/// Deficit against its lower bound |E| - b_N e^{-t tr B/4} |E|² / V(t/2).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LowerBoundGap {
    pub lhs: MCEstimate,
    pub rhs: f64,
    pub margin: f64,
    pub ok: bool,
}

pub fn perbelow_gap(spec: &OperatorSpec, region: &Region, t: f64, cfg: &McConfig) -> Result<LowerBoundGap> {
    spec.require_trace()?;
    let lhs = heat_content_deficit(spec, region, t, cfg)?;
    let m = region.measure();
    let v = covariance(spec, t / 2.0)?.volume;
    let rhs = m - b_const(spec.dim) * (-t * spec.trace_b() / 4.0).exp() * m * m / v;
    let margin = lhs.value - rhs;
    Ok(LowerBoundGap { lhs, rhs, margin, ok: margin >= -4.0 * lhs.std_error })
}

/// H(t) = C₁·per·t^s + C₂·|E|²·t^{-D/2} and its closed-form minimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interpolant {
    pub c1: f64,
    pub c2: f64,
    pub dim: f64,
    pub s: f64,
    pub measure: f64,
    pub per: f64,
}

impl Interpolant {
    pub fn eval(&self, t: f64) -> f64 {
        self.c1 * self.per * t.powf(self.s) + self.c2 * self.measure * self.measure * t.powf(-self.dim / 2.0)
    }

    pub fn argmin(&self) -> f64 {
        (self.dim * self.c2 * self.measure * self.measure / (2.0 * self.s * self.c1 * self.per))
            .powf(2.0 / (self.dim + 2.0 * self.s))
    }

    /// Minimizer by golden section in ln t.
    pub fn argmin_numeric(&self) -> f64 {
        let guess = self.argmin().ln();
        golden_section(|u| self.eval(u.exp()).ln(), guess - 20.0, guess + 23.0, 1e-13).exp()
    }

    /// i with per ≥ i·|E|^{(D-2s)/D} implied by |E| ≤ min H.
    pub fn implied_constant(&self) -> f64 {
        let (d, s) = (self.dim, self.s);
        let k = (1.0 + 2.0 * s / d)
            * self.c1.powf(d / (d + 2.0 * s))
            * (d * self.c2 / (2.0 * s)).powf(2.0 * s / (d + 2.0 * s));
        k.powf(-(d + 2.0 * s) / d)
    }
}

/// Case of the two-regime argument, chosen by A₀ = c D₀ |E|²/per and A∞ = c D∞ |E|²/per.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegimeCase {
    /// A₀ ≤ 1: optimal time at most 1.
    Small,
    /// A∞ ≥ 1: optimal time at least 1.
    Large,
    /// A∞ < 1 < A₀: t = 1.
    Middle,
}

impl RegimeCase {
    pub fn label(&self) -> &'static str {
        match self {
            RegimeCase::Small => "(i)",
            RegimeCase::Large => "(ii)",
            RegimeCase::Middle => "(iii)",
        }
    }
}

/// Inputs of the two-regime argument; D₀ ≥ D∞.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoRegime {
    pub d0: f64,
    pub dinf: f64,
    pub s: f64,
    pub c1: f64,
    pub c2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoRegimeOutcome {
    pub case: RegimeCase,
    pub time: f64,
    pub h_value: f64,
    /// Constant valid in the selected case: min{|E|^{(D₀-2s)/D₀}, |E|^{(D∞-2s)/D∞}} ≤ c·per.
    pub case_constant: f64,
    /// 1 / max over the three cases; valid for every set.
    pub implied_constant: f64,
    pub a0: f64,
    pub ainf: f64,
}

impl TwoRegime {
    pub fn c(&self) -> f64 {
        self.c2 / (2.0 * self.s * self.c1)
    }

    fn h(&self, t: f64, measure: f64, per: f64) -> f64 {
        let m = t.powf(self.d0 / 2.0).min(t.powf(self.dinf / 2.0));
        self.c1 * per * t.powf(self.s) + self.c2 * measure * measure / m
    }

    fn power_case(&self, d: f64) -> f64 {
        let c = self.c();
        let theta = 2.0 * self.s / (d + 2.0 * self.s);
        let m = self.c1 + self.c2 / (c * d);
        (m * (c * d).powf(theta)).powf((d + 2.0 * self.s) / d)
    }

    fn middle_case(&self) -> f64 {
        let c = self.c();
        let m3 = self.c1 + self.c2 / (c * self.dinf);
        let m = 1.0 / (m3 * c * self.d0);
        m3 * m.powf(-2.0 * self.s / self.d0).max(m.powf(-2.0 * self.s / self.dinf))
    }

    pub fn evaluate(&self, measure: f64, per: f64) -> Result<TwoRegimeOutcome> {
        if per <= 0.0 {
            return Err(KfpError::Contradiction(format!("perimeter {per} with measure {measure} > 0 forces |E| = 0")));
        }
        let c = self.c();
        let a0 = c * self.d0 * measure * measure / per;
        let ainf = c * self.dinf * measure * measure / per;
        let s = self.s;
        let (case, time, case_constant) = if a0 <= 1.0 {
            (RegimeCase::Small, a0.powf(2.0 / (self.d0 + 2.0 * s)), self.power_case(self.d0))
        } else if ainf >= 1.0 {
            (RegimeCase::Large, ainf.powf(2.0 / (self.dinf + 2.0 * s)), self.power_case(self.dinf))
        } else {
            (RegimeCase::Middle, 1.0, self.middle_case())
        };
        let worst = self.power_case(self.d0).max(self.power_case(self.dinf)).max(self.middle_case());
        Ok(TwoRegimeOutcome {
            case,
            time,
            h_value: self.h(time, measure, per),
            case_constant,
            implied_constant: 1.0 / worst,
            a0,
            ainf,
        })
    }
}

/// γ = inf over the grid of V(t) / min{t^{D₀/2}, t^{D∞/2}}.
pub fn volume_floor(spec: &OperatorSpec, d0: f64, dinf: f64) -> Result<f64> {
    let mut g = f64::INFINITY;
    for t in default_time_grid() {
        let v = covariance(spec, t)?.volume;
        g = g.min(v / t.powf(d0 / 2.0).min(t.powf(dinf / 2.0)));
    }
    Ok(g)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InterpolationReport {
    pub regime: Regime,
    pub d0: f64,
    pub dinf: f64,
    pub gamma: f64,
    pub t_star: f64,
    pub t_numeric: f64,
    /// |E| ≤ H(t*).
    pub bound_holds: bool,
    pub h_value: f64,
    pub implied_constant: f64,
    pub case: Option<RegimeCase>,
    /// For two regimes: min{|E|^{(D₀-2s)/D₀}, |E|^{(D∞-2s)/D∞}} ≤ case_constant·per.
    pub case_bound_holds: Option<bool>,
}

pub fn interpolation_bound(spec: &OperatorSpec, measure: f64, s: f64, per: f64) -> Result<InterpolationReport> {
    if per <= 0.0 && measure > 0.0 {
        return Err(KfpError::Contradiction(format!("perimeter {per} with measure {measure} > 0 forces |E| = 0")));
    }
    let rep = intrinsic_dimensions(spec)?;
    let (d0, dinf) = rep.snapped();
    let (hi, lo) = (d0.max(dinf), d0.min(dinf));
    let gamma_v = volume_floor(spec, d0, dinf)?;
    let c1 = 2.0 / gamma(1.0 + s);
    let c2 = b_const(spec.dim) / gamma_v * 2f64.powf(hi / 2.0);
    if rep.regime == Regime::Homogeneous || (d0 - dinf).abs() < 1e-9 {
        let h = Interpolant { c1, c2, dim: d0, s, measure, per };
        let t_star = h.argmin();
        let h_value = h.eval(t_star);
        Ok(InterpolationReport {
            regime: rep.regime,
            d0,
            dinf,
            gamma: gamma_v,
            t_star,
            t_numeric: h.argmin_numeric(),
            bound_holds: measure <= h_value * (1.0 + 1e-12),
            h_value,
            implied_constant: h.implied_constant(),
            case: None,
            case_bound_holds: None,
        })
    } else {
        let two = TwoRegime { d0: hi, dinf: lo, s, c1, c2 };
        let out = two.evaluate(measure, per)?;
        let lhs = measure.powf((hi - 2.0 * s) / hi).min(measure.powf((lo - 2.0 * s) / lo));
        Ok(InterpolationReport {
            regime: rep.regime,
            d0,
            dinf,
            gamma: gamma_v,
            t_star: out.time,
            t_numeric: out.time,
            bound_holds: measure <= out.h_value * (1.0 + 1e-12),
            h_value: out.h_value,
            implied_constant: out.implied_constant,
            case: Some(out.case),
            case_bound_holds: Some(lhs <= out.case_constant * per * (1.0 + 1e-12)),
        })
    }
}

/// Implied isoperimetric constant of the interpolation argument; it depends only on
/// the operator and s.
pub fn empirical_iso_constant(spec: &OperatorSpec, s: f64) -> Result<f64> {
    Ok(interpolation_bound(spec, 1.0, s, 1.0)?.implied_constant)
}

/// One row of a ratio sweep; serialized as `measure,s,per_value,quad_err,mc_err,ratio`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub measure: f64,
    pub s: f64,
    pub per_value: f64,
    pub quad_err: f64,
    pub mc_err: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub min_ratio: f64,
    /// Largest pairwise |r_i - r_j| in units of the combined error.
    pub max_z: f64,
}

/// Isoperimetric denominator: |E|^{(D-2s)/D} for one regime, the smaller of the two powers otherwise.
pub fn iso_denominator(measure: f64, d0: f64, dinf: f64, s: f64) -> f64 {
    measure.powf((d0 - 2.0 * s) / d0).min(measure.powf((dinf - 2.0 * s) / dinf))
}

pub fn iso_ratio_sweep(spec: &OperatorSpec, family: &[Region], q: &FracQuadSpec, cfg: &McConfig) -> Result<SweepReport> {
    if family.is_empty() {
        return Err(KfpError::InvalidInput("empty region family".into()));
    }
    let (d0, dinf) = intrinsic_dimensions(spec)?.snapped();
    let mut rows = vec![];
    for (k, e) in family.iter().enumerate() {
        let p = frac_perimeter(spec, e, q, &cfg.derive(k as u64))?;
        let den = iso_denominator(e.measure(), d0, dinf, q.s);
        rows.push(SweepRow {
            measure: e.measure(),
            s: q.s,
            per_value: p.value,
            quad_err: p.quad_error,
            mc_err: p.mc_error,
            ratio: p.value / den,
        });
    }
    let min_ratio = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let err = |r: &SweepRow| (r.quad_err + r.mc_err) * r.ratio / r.per_value.max(f64::MIN_POSITIVE);
    let mut max_z: f64 = 0.0;
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let e = err(&rows[i]).hypot(err(&rows[j])).max(f64::MIN_POSITIVE);
            max_z = max_z.max((rows[i].ratio - rows[j].ratio).abs() / e);
        }
    }
    Ok(SweepReport { rows, min_ratio, max_z })
}

/// per ≤ 2^{1-2s} (s/Γ(1-s)) |E|^{1-2s} S^{2s} (1/(1/2-s) + 1/s), S = sup τ^{-1/2}·deficit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UpperBoundReport {
    pub lhs: f64,
    pub lhs_error: f64,
    pub rhs: f64,
    pub sup_scaled_deficit: f64,
    pub ok: bool,
    /// (1/2 - s)·per and sup (4πτ)^{-1/2}·deficit; recorded, their order is not asserted.
    pub limit_lhs: f64,
    pub limit_rhs: f64,
}

pub fn upper_bound_rhs(measure: f64, s: f64, sup_scaled: f64) -> f64 {
    2f64.powf(1.0 - 2.0 * s) * s / gamma(1.0 - s)
        * measure.powf(1.0 - 2.0 * s)
        * sup_scaled.powf(2.0 * s)
        * (1.0 / (0.5 - s) + 1.0 / s)
}

pub fn bbm_upper_bound(spec: &OperatorSpec, region: &Region, q: &FracQuadSpec, cfg: &McConfig) -> Result<UpperBoundReport> {
    let p = frac_perimeter(spec, region, q, cfg)?;
    let sup = p.sup_scaled_deficit();
    let rhs = upper_bound_rhs(region.measure(), q.s, sup);
    let rel = p.total_error() / p.value.max(f64::MIN_POSITIVE);
    Ok(UpperBoundReport {
        lhs: p.value,
        lhs_error: p.total_error(),
        rhs,
        sup_scaled_deficit: sup,
        ok: p.value <= rhs * (1.0 + 5.0 * rel),
        limit_lhs: (0.5 - q.s) * p.value,
        limit_rhs: sup / (4.0 * PI).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a_const_one_dimension() {
        assert!((a_const(1) - 2.0 / (8.0 * PI).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn power_fit_exact() {
        let t = [1e-3, 2e-3, 5e-3];
        let d: Vec<f64> = t.iter().map(|x: &f64| 3.0 * x.powf(0.5)).collect();
        let (lnc, b) = power_fit(&t, &d, &[1.0; 3]).unwrap();
        assert!((b - 0.5).abs() < 1e-12 && (lnc.exp() - 3.0).abs() < 1e-10);
    }

    #[test]
    fn zero_perimeter_is_a_contradiction() {
        let two = TwoRegime { d0: 4.0, dinf: 2.0, s: 0.25, c1: 2.0, c2: 1.0 };
        assert!(matches!(two.evaluate(1.0, 0.0), Err(KfpError::Contradiction(_))));
    }
}
