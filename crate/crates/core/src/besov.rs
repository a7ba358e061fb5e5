//! Besov seminorm 𝒩_{α,1}, the coarea identity, the layer-cake inequality and the
//! strong Sobolev embeddings.

use crate::error::{KfpError, Result};
use crate::field::ScalarField;
use crate::fractional::FracQuadSpec;
use crate::matlin::sym_spectrum;
use crate::mc::{mix64, stream, Accum, McConfig};
use crate::operator::{covariance, intrinsic_dimensions, omega, OperatorSpec};
use crate::perimeter::{curve_integral, curve_rule, empirical_iso_constant, frac_perimeter, BATCHES};
use crate::quad::{gauss_legendre, integrate};
use crate::region::Region;
use crate::semigroup::{sample_forward, AdjointLaw, Proposal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

/// Quasi-concave profile (gaussian or bump with positive amplitude) whose superlevel
/// sets are nested ellipsoids. Levels are indexed by a radius-like parameter ρ:
/// E(ρ) = {gauge < ρ}, with σ(ρ) the value of f on ∂E(ρ).
#[derive(Debug, Clone)]
pub struct LevelSetProfile {
    field: ScalarField,
    amplitude: f64,
    /// |E(1)|.
    unit_measure: f64,
    dim: usize,
    /// Bump order; None for a gaussian.
    order: Option<u32>,
}

impl LevelSetProfile {
    pub fn new(field: ScalarField) -> Result<Self> {
        let dim = field.dim();
        if let Some(g) = field.as_gaussian() {
            if g.amplitude <= 0.0 {
                return Err(KfpError::Precondition("profile needs a positive amplitude".into()));
            }
            let det = sym_spectrum(&g.cov)?.det;
            let (a, u) = (g.amplitude, omega(dim) * det.sqrt());
            return Ok(Self { field, amplitude: a, unit_measure: u, dim, order: None });
        }
        if let Some(b) = field.as_bump() {
            if b.amplitude <= 0.0 {
                return Err(KfpError::Precondition("profile needs a positive amplitude".into()));
            }
            let det = sym_spectrum(&b.shape)?.det;
            let (a, u, k) = (b.amplitude, omega(dim) / det.sqrt(), b.order);
            return Ok(Self { field, amplitude: a, unit_measure: u, dim, order: Some(k) });
        }
        Err(KfpError::Precondition("level-set profiles are gaussians or bumps".into()))
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn sigma_max(&self) -> f64 {
        self.amplitude
    }

    /// Upper end of the level parameter.
    fn rho_max(&self) -> f64 {
        if self.order.is_some() {
            1.0
        } else {
            12.0
        }
    }

    fn sigma_of(&self, rho: f64) -> f64 {
        match self.order {
            None => self.amplitude * (-0.5 * rho * rho).exp(),
            Some(k) => self.amplitude * (1.0 - rho * rho).max(0.0).powi(k as i32),
        }
    }

    /// |dσ/dρ|.
    fn sigma_slope(&self, rho: f64) -> f64 {
        match self.order {
            None => self.amplitude * rho * (-0.5 * rho * rho).exp(),
            Some(k) => 2.0 * self.amplitude * k as f64 * rho * (1.0 - rho * rho).max(0.0).powi(k as i32 - 1),
        }
    }

    fn rho_of(&self, sigma: f64) -> f64 {
        if sigma <= 0.0 {
            return self.rho_max();
        }
        if sigma >= self.amplitude {
            return 0.0;
        }
        match self.order {
            None => (2.0 * (self.amplitude / sigma).ln()).sqrt(),
            Some(k) => (1.0 - (sigma / self.amplitude).powf(1.0 / k as f64)).sqrt(),
        }
    }

    fn measure_at(&self, rho: f64) -> f64 {
        self.unit_measure * rho.powi(self.dim as i32)
    }

    /// |{f > σ}|.
    pub fn level_measure(&self, sigma: f64) -> f64 {
        if sigma <= 0.0 && self.order.is_none() {
            return f64::INFINITY;
        }
        self.measure_at(self.rho_of(sigma))
    }

    /// {f > σ} as an ellipsoid; None when empty.
    pub fn level_region(&self, sigma: f64) -> Option<Region> {
        if let Some(g) = self.field.as_gaussian() {
            g.superlevel(sigma)
        } else {
            self.field.as_bump().and_then(|b| b.superlevel(sigma))
        }
    }

    /// Gauss-Legendre nodes in ρ mapped to (σ, weight for dσ); the gaussian uses ρ ∈ [0, 6].
    pub fn coarea_levels(&self, n: usize) -> Vec<(f64, f64)> {
        let hi = if self.order.is_some() { 1.0 } else { 6.0 };
        let (x, w) = gauss_legendre(n);
        x.iter()
            .zip(&w)
            .map(|(xi, wi)| {
                let rho = 0.5 * hi * (xi + 1.0);
                (self.sigma_of(rho), 0.5 * hi * wi * self.sigma_slope(rho))
            })
            .collect()
    }

    /// ∫ g(ρ) dρ over [a, b] by adaptive quadrature.
    fn integrate_rho(&self, g: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        integrate(g, a, b, 1e-14, 1e-11).value
    }

    /// ‖f‖_q by the layer cake ∫ q σ^{q-1} |{f > σ}| dσ.
    pub fn lq_norm(&self, q: f64) -> f64 {
        let v = self.integrate_rho(
            |r| q * self.sigma_of(r).powf(q - 1.0) * self.sigma_slope(r) * self.measure_at(r),
            0.0,
            self.rho_max(),
        );
        v.powf(1.0 / q)
    }

    /// σ_f = sup{σ > 0 : |{f > σ}| > 1}; 0 when no level set exceeds unit measure.
    pub fn split_level(&self) -> f64 {
        let rho = (1.0 / self.unit_measure).powf(1.0 / self.dim as f64);
        if rho >= self.rho_max() {
            0.0
        } else {
            self.sigma_of(rho)
        }
    }

    /// (‖f·1_{E_σ}‖_{q_small}, ‖f - f·1_{E_σ}‖_{q_large}) at σ = split_level().
    pub fn split_norms(&self, q_small: f64, q_large: f64) -> (f64, f64) {
        let sf = self.split_level();
        let rf = self.rho_of(sf).min(self.rho_max());
        let mf = self.measure_at(rf);
        let inner = self.integrate_rho(
            |r| q_small * self.sigma_of(r).powf(q_small - 1.0) * self.sigma_slope(r) * self.measure_at(r),
            0.0,
            rf,
        ) + sf.powf(q_small) * mf;
        let outer = if rf < self.rho_max() {
            self.integrate_rho(
                |r| {
                    q_large * self.sigma_of(r).powf(q_large - 1.0) * self.sigma_slope(r) * (self.measure_at(r) - mf)
                },
                rf,
                self.rho_max(),
            )
        } else {
            0.0
        };
        (inner.powf(1.0 / q_small), outer.max(0.0).powf(1.0 / q_large))
    }
}

/// ‖√|f|‖₁ where it has a closed form; the pair term of the far-time bracket.
fn root_mass(f: &ScalarField) -> Option<f64> {
    let n = f.dim() as f64;
    if let Some(g) = f.as_gaussian() {
        let det = sym_spectrum(&g.cov).ok()?.det;
        return Some(g.amplitude.abs().sqrt() * (4.0 * PI).powf(n / 2.0) * det.sqrt());
    }
    if let Some(b) = f.as_bump() {
        let det = sym_spectrum(&b.shape).ok()?.det;
        let k = b.order as f64 / 2.0;
        return Some(b.amplitude.abs().sqrt() * PI.powf(n / 2.0) * gamma(k + 1.0) / gamma(k + 1.0 + n / 2.0) / det.sqrt());
    }
    if let Some(r) = f.as_region() {
        return Some(r.measure());
    }
    None
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BesovEstimate {
    pub alpha: f64,
    pub value: f64,
    pub quad_error: f64,
    pub mc_error: f64,
    pub near_exponent: f64,
    pub warnings: Vec<String>,
}

impl BesovEstimate {
    pub fn total_error(&self) -> f64 {
        self.quad_error + self.mc_error
    }
}

/// 𝒩_{α,1}(f) = ∫₀^∞ t^{-1-α/2} ∫ P_t(|f - f(X)|)(X) dX dt.
///
/// The inner double integral is estimated by multiple importance sampling: even samples
/// draw X from a proposal q covering f and Y forward from X, odd samples draw Y from q
/// and X from the adjoint law at Y. With the balance heuristic both reduce to
/// |f(Y) - f(X)| / (½q(X) + ½e^{t tr B}q(Y)). The time integral, small-time
/// extrapolation and far-time bracket are those of the fractional perimeter.
pub fn besov_seminorm(
    spec: &OperatorSpec,
    f: &ScalarField,
    alpha: f64,
    quad: &FracQuadSpec,
    cfg: &McConfig,
) -> Result<BesovEstimate> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(KfpError::Domain(format!("Besov order must lie in (0,1), got {alpha}")));
    }
    spec.require_trace()?;
    if f.dim() != spec.dim {
        return Err(KfpError::InvalidInput("field and operator differ in dimension".into()));
    }
    if cfg.n == 0 {
        return Err(KfpError::Domain("sample count must be positive".into()));
    }
    let mass = f
        .l1_bound()
        .ok_or_else(|| KfpError::Precondition("Besov seminorm needs an integrable field".into()))?;
    if mass == 0.0 || f.constant_value() == Some(0.0) {
        return Ok(BesovEstimate { alpha, value: 0.0, quad_error: 0.0, mc_error: 0.0, near_exponent: 0.0, warnings: vec![] });
    }
    let s = alpha / 2.0;
    let q = FracQuadSpec { s, ..*quad };
    let rule = curve_rule(&q);
    let proposal = Proposal::covering(&[f], 2.0, 0.1)?;
    let trb = spec.trace_b();
    let laws = rule
        .times
        .iter()
        .map(|&t| {
            let cb = covariance(spec, t)?;
            let adj = AdjointLaw::new(spec, &cb)?;
            Ok((cb, adj, (t * trb).exp()))
        })
        .collect::<Result<Vec<_>>>()?;
    let key = mix64(cfg.seed ^ 0xBE50_F00D);
    let n = cfg.n;
    let dim = spec.dim;
    let batches: Vec<Vec<Accum>> = (0..BATCHES)
        .into_par_iter()
        .map(|b| {
            let (lo, hi) = (b * n / BATCHES, (b + 1) * n / BATCHES);
            let mut acc = vec![Accum::default(); laws.len()];
            let (mut x, mut y) = (vec![0.0; dim], vec![0.0; dim]);
            for i in lo..hi {
                for (a, (cb, adj, grow)) in acc.iter_mut().zip(&laws) {
                    let mut rng = stream(key, i as u64);
                    if i % 2 == 0 {
                        proposal.sample(&mut rng, &mut x);
                        sample_forward(cb, &x, &mut rng, &mut y);
                    } else {
                        proposal.sample(&mut rng, &mut y);
                        adj.sample(&y, &mut rng, &mut x);
                    }
                    let den = 0.5 * proposal.density(&x) + 0.5 * grow * proposal.density(&y);
                    let g = (f.eval(&y) - f.eval(&x)).abs();
                    a.push(if g == 0.0 { 0.0 } else { g / den });
                }
            }
            acc
        })
        .collect();
    let pair = root_mass(f).map(|r| r * r).unwrap_or(mass * mass / f64::MIN_POSITIVE);
    let ci = curve_integral(spec, &rule, &batches, s, mass, pair)?;
    Ok(BesovEstimate {
        alpha,
        value: ci.value.max(0.0),
        quad_error: ci.quad_error,
        mc_error: ci.mc_error,
        near_exponent: ci.beta,
        warnings: ci.warnings,
    })
}

/// One level of the coarea quadrature; serialized as `sigma,measure,per_value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub sigma: f64,
    pub measure: f64,
    pub per_value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoareaReport {
    pub lhs: BesovEstimate,
    pub rhs: f64,
    pub rhs_error: f64,
    /// |lhs - rhs| / lhs.
    pub residual: f64,
    pub levels: Vec<LevelRow>,
}

/// 𝒩_{2s,1}(f) against (Γ(1-s)/s) ∫ ‖(-𝒜)^s 1_{f>σ}‖₁ dσ.
pub fn coarea_residual(
    spec: &OperatorSpec,
    prof: &LevelSetProfile,
    s: f64,
    n_levels: usize,
    quad: &FracQuadSpec,
    cfg: &McConfig,
) -> Result<CoareaReport> {
    if !(s > 0.0 && s < 0.5) {
        return Err(KfpError::Range(format!("coarea check needs 0 < s < 1/2, got {s}")));
    }
    let lhs = besov_seminorm(spec, prof.field(), 2.0 * s, quad, cfg)?;
    let q = FracQuadSpec { s, ..*quad };
    let mut rhs = 0.0;
    let mut err = 0.0;
    let mut levels = vec![];
    for (k, (sigma, w)) in prof.coarea_levels(n_levels).into_iter().enumerate() {
        let Some(e) = prof.level_region(sigma) else { continue };
        let p = frac_perimeter(spec, &e, &q, &cfg.derive(100 + k as u64))?;
        rhs += w * p.value;
        err += w * p.total_error();
        levels.push(LevelRow { sigma, measure: e.measure(), per_value: p.value });
    }
    let c = gamma(1.0 - s) / s;
    let (rhs, rhs_error) = (c * rhs, c * err);
    Ok(CoareaReport { residual: (lhs.value - rhs).abs() / lhs.value, lhs, rhs, rhs_error, levels })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerCake {
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

/// (D/(D-2s)) ∫ t^{2s/(D-2s)} G ≤ (∫ G^{(D-2s)/D})^{D/(D-2s)} for non-increasing G ≥ 0,
/// given as a piecewise-linear function through `knots` (t, G). Repeated abscissae
/// encode jumps; G vanishes after the last knot, whose value must be 0.
pub fn layercake_check(knots: &[(f64, f64)], d: f64, s: f64) -> Result<LayerCake> {
    if !(d > 2.0 * s && s > 0.0) {
        return Err(KfpError::Domain(format!("need D > 2s > 0, got D = {d}, s = {s}")));
    }
    if knots.len() < 2 || knots[0].0 != 0.0 {
        return Err(KfpError::InvalidInput("knots must start at t = 0 and have at least two points".into()));
    }
    for w in knots.windows(2) {
        if w[1].0 < w[0].0 {
            return Err(KfpError::InvalidInput("knot abscissae must be non-decreasing".into()));
        }
        if w[1].1 > w[0].1 {
            return Err(KfpError::Precondition(format!("G increases between t = {} and t = {}", w[0].0, w[1].0)));
        }
    }
    if knots.iter().any(|k| k.1 < 0.0) || knots.last().map(|k| k.1) != Some(0.0) {
        return Err(KfpError::InvalidInput("G must be non-negative and end at 0".into()));
    }
    let p = 2.0 * s / (d - 2.0 * s);
    let r = (d - 2.0 * s) / d;
    let (mut moment, mut power) = (0.0, 0.0);
    for w in knots.windows(2) {
        let ((a, ga), (b, gb)) = (w[0], w[1]);
        let h = b - a;
        if h == 0.0 {
            continue;
        }
        let slope = (gb - ga) / h;
        // ∫_a^b t^p (ga + slope (t - a)) dt
        let pw = |t: f64, e: f64| t.powf(e);
        moment += (ga - slope * a) * (pw(b, p + 1.0) - pw(a, p + 1.0)) / (p + 1.0)
            + slope * (pw(b, p + 2.0) - pw(a, p + 2.0)) / (p + 2.0);
        // ∫_a^b G^r dt
        power += if slope == 0.0 {
            ga.powf(r) * h
        } else {
            (gb.powf(r + 1.0) - ga.powf(r + 1.0)) / (slope * (r + 1.0))
        };
    }
    let lhs = d / (d - 2.0 * s) * moment;
    let rhs = power.powf(1.0 / r);
    Ok(LayerCake { lhs, rhs, ok: lhs <= rhs * (1.0 + 1e-6) })
}

/// Split of f at σ_f for two volume regimes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitNorms {
    pub split_level: f64,
    pub q_small: f64,
    pub q_large: f64,
    pub norm_small: f64,
    pub norm_large: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SobolevReport {
    pub lhs: f64,
    pub rhs: f64,
    pub rhs_error: f64,
    pub iso_constant: f64,
    pub ok: bool,
    pub split: Option<SplitNorms>,
}

/// ‖f‖_{D/(D-2s)} ≤ s/(i Γ(1-s)) 𝒩_{2s,1}(f) for one regime; for two regimes
/// ‖f₁‖_{D₀/(D₀-2s)} + ‖f₂‖_{D∞/(D∞-2s)} ≤ 2s/(i Γ(1-s)) 𝒩_{2s,1}(f) with f₁ = f·1_{f>σ_f}.
/// The constant i is the empirical one of the interpolation argument.
pub fn sobolev_ratio(
    spec: &OperatorSpec,
    prof: &LevelSetProfile,
    s: f64,
    quad: &FracQuadSpec,
    cfg: &McConfig,
) -> Result<SobolevReport> {
    let (d0, dinf) = intrinsic_dimensions(spec)?.snapped();
    let (hi, lo) = (d0.max(dinf), d0.min(dinf));
    if lo <= 2.0 * s {
        return Err(KfpError::Domain(format!("embedding needs D > 2s, got D = {lo}")));
    }
    let iso = empirical_iso_constant(spec, s)?;
    let nb = besov_seminorm(spec, prof.field(), 2.0 * s, quad, cfg)?;
    let base = s / (iso * gamma(1.0 - s));
    let (lhs, factor, split) = if (hi - lo).abs() < 1e-9 {
        (prof.lq_norm(hi / (hi - 2.0 * s)), base, None)
    } else {
        let (qs, ql) = (hi / (hi - 2.0 * s), lo / (lo - 2.0 * s));
        let (a, b) = prof.split_norms(qs, ql);
        let sp = SplitNorms { split_level: prof.split_level(), q_small: qs, q_large: ql, norm_small: a, norm_large: b };
        (a + b, 2.0 * base, Some(sp))
    };
    let rhs = factor * nb.value;
    let rhs_error = factor * nb.total_error();
    Ok(SobolevReport { lhs, rhs, rhs_error, iso_constant: iso, ok: lhs <= rhs + 5.0 * rhs_error, split })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layercake_equality_case() {
        let lc = layercake_check(&[(0.0, 1.0), (1.0, 1.0), (1.0, 0.0)], 4.0, 0.25).unwrap();
        assert!((lc.lhs - 1.0).abs() < 1e-12 && (lc.rhs - 1.0).abs() < 1e-12);
    }

    #[test]
    fn layercake_rejects_increase() {
        assert!(matches!(
            layercake_check(&[(0.0, 0.5), (1.0, 1.0), (2.0, 0.0)], 4.0, 0.25),
            Err(KfpError::Precondition(_))
        ));
    }

    #[test]
    fn gaussian_norm_closed_form() {
        let p = LevelSetProfile::new(ScalarField::standard_gaussian(2)).unwrap();
        let q = 1.5;
        let exact = (2.0 * PI / q).powf(1.0 / q);
        assert!((p.lq_norm(q) - exact).abs() < 1e-9 * exact);
    }
}
