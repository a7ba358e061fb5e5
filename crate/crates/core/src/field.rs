//! Test functions on R^N: gaussians, polynomial bumps, linear functions, indicators and
//! finite sums of these.

use crate::error::{KfpError, Result};
use crate::matlin::{psd_sqrt, sym_spectrum, SquareMatrix};
use crate::mc::fill_normal;
use crate::operator::{covariance, OperatorSpec};
use crate::region::{Region, RegionSpec};
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FieldSpec {
    /// a · exp(-½ dᵀ C⁻¹ d), d = x - center.
    Gaussian { center: Vec<f64>, covariance: SquareMatrix, #[serde(default = "one")] amplitude: f64 },
    /// a · (1 - dᵀ M d)_+^order. Either `radius` (M = I/r²) or `shape` (M) is given.
    Bump {
        center: Vec<f64>,
        #[serde(default)]
        radius: Option<f64>,
        #[serde(default)]
        shape: Option<SquareMatrix>,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "three")]
        order: u32,
    },
    /// <coeffs, x> + offset.
    Linear { coeffs: Vec<f64>, #[serde(default)] offset: f64 },
    Indicator { region: RegionSpec },
    Sum { terms: Vec<WeightedTerm> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedTerm {
    pub weight: f64,
    pub field: FieldSpec,
}

fn one() -> f64 {
    1.0
}
fn three() -> u32 {
    3
}

#[derive(Debug, Clone)]
pub struct Gaussian {
    pub center: Vec<f64>,
    pub cov: SquareMatrix,
    pub amplitude: f64,
    prec: SquareMatrix,
    root: SquareMatrix,
    det: f64,
}

#[derive(Debug, Clone)]
pub struct Bump {
    pub center: Vec<f64>,
    pub shape: SquareMatrix,
    pub amplitude: f64,
    pub order: u32,
    inv_root: SquareMatrix,
    det: f64,
}

#[derive(Debug, Clone)]
enum Kind {
    Gaussian(Gaussian),
    Bump(Bump),
    Linear { coeffs: Vec<f64>, offset: f64 },
    Indicator(Region),
    Sum(Vec<(f64, ScalarField)>),
}

#[derive(Debug, Clone)]
pub struct ScalarField {
    kind: Kind,
    dim: usize,
}

fn quad_form(m: &SquareMatrix, d: &[f64]) -> f64 {
    let n = d.len();
    let mut acc = 0.0;
    for i in 0..n {
        let row = m.row(i);
        let mut r = 0.0;
        for j in 0..n {
            r += row[j] * d[j];
        }
        acc += d[i] * r;
    }
    acc
}

fn diff(x: &[f64], c: &[f64]) -> Vec<f64> {
    x.iter().zip(c).map(|(a, b)| a - b).collect()
}

impl Gaussian {
    pub fn new(center: Vec<f64>, cov: SquareMatrix, amplitude: f64) -> Result<Self> {
        if center.len() != cov.dim() || !amplitude.is_finite() || center.iter().any(|v| !v.is_finite()) {
            return Err(KfpError::InvalidInput("gaussian field: bad center/covariance".into()));
        }
        if !cov.is_symmetric(1e-12) {
            return Err(KfpError::InvalidInput("gaussian covariance must be symmetric".into()));
        }
        let sp = sym_spectrum(&cov)?;
        if !(sp.min_eig > 0.0) {
            return Err(KfpError::InvalidInput("gaussian covariance must be positive definite".into()));
        }
        let prec = cov.inverse()?.symmetrize();
        let root = psd_sqrt(&cov)?;
        Ok(Self { center, cov, amplitude, prec, root, det: sp.det })
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let n = x.len();
        let mut d = [0.0; 16];
        for i in 0..n {
            d[i] = x[i] - self.center[i];
        }
        self.amplitude * (-0.5 * quad_form(&self.prec, &d[..n])).exp()
    }

    /// ∫ |f| = |a| (2π)^{N/2} √det C.
    pub fn l1(&self) -> f64 {
        self.amplitude.abs() * (2.0 * PI).powf(self.center.len() as f64 / 2.0) * self.det.sqrt()
    }

    /// Exact image under P_t: the law N(e^{tB}X, Σ) convolved with the gaussian gives
    /// a·√(det C/det(C+Σ))·exp(-½(e^{tB}X-c)ᵀ(C+Σ)⁻¹(e^{tB}X-c)), which is again a
    /// gaussian in X with center e^{-tB}c and covariance e^{-tB}(C+Σ)e^{-tBᵀ}.
    pub fn evolve(&self, spec: &OperatorSpec, t: f64) -> Result<Gaussian> {
        if t == 0.0 {
            return Ok(self.clone());
        }
        let cb = covariance(spec, t)?;
        let sum = self.cov.add(&cb.tk.scale(2.0)).symmetrize();
        let einv = crate::matlin::mat_exp(&spec.b, -t)?;
        let cov = einv.matmul(&sum).matmul(&einv.transpose()).symmetrize();
        let center = einv.mul_vec(&self.center);
        let amp = self.amplitude * (self.det / sym_spectrum(&sum)?.det).sqrt();
        Gaussian::new(center, cov, amp)
    }
}

impl Bump {
    pub fn new(center: Vec<f64>, shape: SquareMatrix, amplitude: f64, order: u32) -> Result<Self> {
        if center.len() != shape.dim() || order == 0 {
            return Err(KfpError::InvalidInput("bump field: bad shape or order 0".into()));
        }
        let sp = sym_spectrum(&shape)?;
        if !(sp.min_eig > 0.0) {
            return Err(KfpError::InvalidInput("bump shape must be positive definite".into()));
        }
        let inv_root = psd_sqrt(&shape.inverse()?)?;
        Ok(Self { center, shape, amplitude, order, inv_root, det: sp.det })
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let n = x.len();
        let mut d = [0.0; 16];
        for i in 0..n {
            d[i] = x[i] - self.center[i];
        }
        let g = 1.0 - quad_form(&self.shape, &d[..n]);
        if g <= 0.0 {
            0.0
        } else {
            self.amplitude * g.powi(self.order as i32)
        }
    }

    /// ∫ |f| = |a| π^{N/2} Γ(k+1)/Γ(k+1+N/2) / √det M.
    pub fn l1(&self) -> f64 {
        let n = self.center.len() as f64;
        let k = self.order as f64;
        self.amplitude.abs() * PI.powf(n / 2.0) * gamma(k + 1.0) / gamma(k + 1.0 + n / 2.0) / self.det.sqrt()
    }

    /// Covariance of the probability density proportional to the bump.
    fn spread(&self) -> SquareMatrix {
        let n = self.center.len() as f64;
        let er2 = (n / 2.0) / (n / 2.0 + self.order as f64 + 1.0);
        self.shape.inverse().expect("validated").scale(er2 / n)
    }

    fn sample(&self, rng: &mut impl Rng, out: &mut [f64]) {
        let n = self.center.len();
        let r2: f64 = Beta::new(n as f64 / 2.0, self.order as f64 + 1.0).expect("valid").sample(rng);
        let mut u = vec![0.0; n];
        loop {
            fill_normal(rng, &mut u);
            let len = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            if len > 1e-12 {
                u.iter_mut().for_each(|v| *v *= r2.sqrt() / len);
                break;
            }
        }
        self.inv_root.mul_vec_into(&u, out);
        for (o, c) in out.iter_mut().zip(&self.center) {
            *o += c;
        }
    }

    /// Level set {f > σ} as an ellipsoid, None when empty.
    pub fn superlevel(&self, sigma: f64) -> Option<Region> {
        if self.amplitude <= 0.0 || sigma >= self.amplitude {
            return None;
        }
        let frac = 1.0 - (sigma.max(0.0) / self.amplitude).powf(1.0 / self.order as f64);
        if frac <= 0.0 {
            return None;
        }
        Region::ellipsoid(self.center.clone(), self.shape.scale(1.0 / frac)).ok()
    }
}

impl Gaussian {
    /// Level set {f > σ} as an ellipsoid, None when empty.
    pub fn superlevel(&self, sigma: f64) -> Option<Region> {
        if self.amplitude <= 0.0 || sigma >= self.amplitude || sigma <= 0.0 {
            return None;
        }
        let r2 = 2.0 * (self.amplitude / sigma).ln();
        Region::ellipsoid(self.center.clone(), self.prec.scale(1.0 / r2)).ok()
    }

    fn sample(&self, rng: &mut impl Rng, out: &mut [f64]) {
        let n = self.center.len();
        let mut z = [0.0; 16];
        fill_normal(rng, &mut z[..n]);
        self.root.mul_vec_into(&z[..n], out);
        for (o, c) in out.iter_mut().zip(&self.center) {
            *o += c;
        }
    }
}

impl ScalarField {
    pub fn from_spec(spec: &FieldSpec) -> Result<Self> {
        let (kind, dim) = match spec {
            FieldSpec::Gaussian { center, covariance, amplitude } => {
                let g = Gaussian::new(center.clone(), covariance.clone(), *amplitude)?;
                (Kind::Gaussian(g), center.len())
            }
            FieldSpec::Bump { center, radius, shape, amplitude, order } => {
                let m = match (radius, shape) {
                    (Some(r), None) if *r > 0.0 => SquareMatrix::diag(&vec![1.0 / (r * r); center.len()]),
                    (None, Some(m)) => m.clone(),
                    _ => return Err(KfpError::InvalidInput("bump needs exactly one of radius/shape".into())),
                };
                (Kind::Bump(Bump::new(center.clone(), m, *amplitude, *order)?), center.len())
            }
            FieldSpec::Linear { coeffs, offset } => {
                if coeffs.is_empty() || coeffs.iter().chain([offset]).any(|v| !v.is_finite()) {
                    return Err(KfpError::InvalidInput("linear field: bad coefficients".into()));
                }
                (Kind::Linear { coeffs: coeffs.clone(), offset: *offset }, coeffs.len())
            }
            FieldSpec::Indicator { region } => {
                let r = Region::from_spec(region)?;
                let n = r.dim();
                (Kind::Indicator(r), n)
            }
            FieldSpec::Sum { terms } => {
                if terms.is_empty() {
                    return Err(KfpError::InvalidInput("sum field needs terms".into()));
                }
                let parts: Vec<(f64, ScalarField)> = terms
                    .iter()
                    .map(|t| Ok((t.weight, ScalarField::from_spec(&t.field)?)))
                    .collect::<Result<_>>()?;
                let n = parts[0].1.dim;
                if parts.iter().any(|p| p.1.dim != n) {
                    return Err(KfpError::InvalidInput("sum terms differ in dimension".into()));
                }
                (Kind::Sum(parts), n)
            }
        };
        Ok(Self { kind, dim })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: FieldSpec = serde_json::from_str(text).map_err(|e| KfpError::InvalidInput(e.to_string()))?;
        Self::from_spec(&spec)
    }

    pub fn gaussian(center: Vec<f64>, cov: SquareMatrix, amplitude: f64) -> Result<Self> {
        let dim = center.len();
        Ok(Self { kind: Kind::Gaussian(Gaussian::new(center, cov, amplitude)?), dim })
    }

    /// exp(-|x|²/2) in R^n.
    pub fn standard_gaussian(n: usize) -> Self {
        Self::gaussian(vec![0.0; n], SquareMatrix::identity(n), 1.0).expect("valid")
    }

    pub fn bump(center: Vec<f64>, shape: SquareMatrix, amplitude: f64, order: u32) -> Result<Self> {
        let dim = center.len();
        Ok(Self { kind: Kind::Bump(Bump::new(center, shape, amplitude, order)?), dim })
    }

    pub fn linear(coeffs: Vec<f64>, offset: f64) -> Self {
        let dim = coeffs.len();
        Self { kind: Kind::Linear { coeffs, offset }, dim }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self::linear(vec![0.0; n], c)
    }

    pub fn indicator(region: Region) -> Self {
        let dim = region.dim();
        Self { kind: Kind::Indicator(region), dim }
    }

    pub fn sum(terms: Vec<(f64, ScalarField)>) -> Result<Self> {
        let dim = terms.first().ok_or_else(|| KfpError::InvalidInput("empty sum".into()))?.1.dim;
        if terms.iter().any(|t| t.1.dim != dim) {
            return Err(KfpError::InvalidInput("sum terms differ in dimension".into()));
        }
        Ok(Self { kind: Kind::Sum(terms), dim })
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { kind: Kind::Sum(vec![(c, self.clone())]), dim: self.dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_gaussian(&self) -> Option<&Gaussian> {
        match &self.kind {
            Kind::Gaussian(g) => Some(g),
            _ => None,
        }
    }

    pub fn as_bump(&self) -> Option<&Bump> {
        match &self.kind {
            Kind::Bump(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_region(&self) -> Option<&Region> {
        match &self.kind {
            Kind::Indicator(r) => Some(r),
            _ => None,
        }
    }

    /// True when the field is a constant function.
    pub fn constant_value(&self) -> Option<f64> {
        match &self.kind {
            Kind::Linear { coeffs, offset } if coeffs.iter().all(|c| *c == 0.0) => Some(*offset),
            _ => None,
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.kind {
            Kind::Gaussian(g) => g.eval(x),
            Kind::Bump(b) => b.eval(x),
            Kind::Linear { coeffs, offset } => offset + coeffs.iter().zip(x).map(|(a, b)| a * b).sum::<f64>(),
            Kind::Indicator(r) => f64::from(u8::from(r.contains(x))),
            Kind::Sum(parts) => parts.iter().map(|(w, f)| w * f.eval(x)).sum(),
        }
    }

    /// Upper bound on ‖f‖₁ (exact for a single gaussian, bump or indicator); None if
    /// the field is not integrable.
    pub fn l1_bound(&self) -> Option<f64> {
        match &self.kind {
            Kind::Gaussian(g) => Some(g.l1()),
            Kind::Bump(b) => Some(b.l1()),
            Kind::Linear { coeffs, offset } => {
                if coeffs.iter().all(|c| *c == 0.0) && *offset == 0.0 {
                    Some(0.0)
                } else {
                    None
                }
            }
            Kind::Indicator(r) => Some(r.measure()),
            Kind::Sum(parts) => parts.iter().map(|(w, f)| f.l1_bound().map(|m| w.abs() * m)).sum(),
        }
    }

    /// Upper bound on sup |f|; None if unbounded.
    pub fn sup_bound(&self) -> Option<f64> {
        match &self.kind {
            Kind::Gaussian(g) => Some(g.amplitude.abs()),
            Kind::Bump(b) => Some(b.amplitude.abs()),
            Kind::Linear { coeffs, offset } => coeffs.iter().all(|c| *c == 0.0).then_some(offset.abs()),
            Kind::Indicator(_) => Some(1.0),
            Kind::Sum(parts) => parts.iter().map(|(w, f)| f.sup_bound().map(|m| w.abs() * m)).sum(),
        }
    }

    /// Generator tr(Q∇²f) + <Bx, ∇f> in closed form; None for fields that are not C².
    pub fn generator(&self, spec: &OperatorSpec, x: &[f64]) -> Option<f64> {
        let bx = spec.b.mul_vec(x);
        match &self.kind {
            Kind::Gaussian(g) => {
                let d = diff(x, &g.center);
                let pd = g.prec.mul_vec(&d);
                let f = g.eval(x);
                let qpd = spec.q.mul_vec(&pd);
                let hess = pd.iter().zip(&qpd).map(|(a, b)| a * b).sum::<f64>() - spec.q.matmul(&g.prec).trace();
                let drift = -bx.iter().zip(&pd).map(|(a, b)| a * b).sum::<f64>();
                Some(f * (hess + drift))
            }
            Kind::Bump(b) => {
                if b.order < 2 {
                    return None;
                }
                let d = diff(x, &b.center);
                let md = b.shape.mul_vec(&d);
                let g = 1.0 - md.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>();
                if g <= 0.0 {
                    return Some(0.0);
                }
                let k = b.order as f64;
                let a = b.amplitude;
                let qmd = spec.q.mul_vec(&md);
                let mqm = md.iter().zip(&qmd).map(|(u, v)| u * v).sum::<f64>();
                let hess = a * k * (k - 1.0) * g.powi(b.order as i32 - 2) * 4.0 * mqm
                    - 2.0 * a * k * g.powi(b.order as i32 - 1) * spec.q.matmul(&b.shape).trace();
                let grad_dot = -2.0 * a * k * g.powi(b.order as i32 - 1) * bx.iter().zip(&md).map(|(u, v)| u * v).sum::<f64>();
                Some(hess + grad_dot)
            }
            Kind::Linear { coeffs, .. } => Some(bx.iter().zip(coeffs).map(|(a, b)| a * b).sum()),
            Kind::Indicator(_) => None,
            Kind::Sum(parts) => parts.iter().map(|(w, f)| f.generator(spec, x).map(|v| w * v)).sum(),
        }
    }

    /// Closed-form P_t f for gaussians, linear functions and sums of these.
    pub fn evolve(&self, spec: &OperatorSpec, t: f64) -> Result<ScalarField> {
        let kind = match &self.kind {
            Kind::Gaussian(g) => Kind::Gaussian(g.evolve(spec, t)?),
            Kind::Linear { coeffs, offset } => {
                let e = crate::matlin::mat_exp(&spec.b, t)?;
                Kind::Linear { coeffs: e.transpose().mul_vec(coeffs), offset: *offset }
            }
            Kind::Sum(parts) => Kind::Sum(
                parts.iter().map(|(w, f)| Ok((*w, f.evolve(spec, t)?))).collect::<Result<_>>()?,
            ),
            _ => return Err(KfpError::Precondition("closed-form evolution needs gaussian or linear terms".into())),
        };
        Ok(Self { kind, dim: self.dim })
    }

    /// Gaussian components (weight, center, covariance) describing where the field lives.
    pub fn cover(&self) -> Result<Vec<(f64, Vec<f64>, SquareMatrix)>> {
        Ok(match &self.kind {
            Kind::Gaussian(g) => vec![(g.l1(), g.center.clone(), g.cov.clone())],
            Kind::Bump(b) => vec![(b.l1(), b.center.clone(), b.shape.inverse()?.scale(0.25))],
            Kind::Indicator(r) => {
                let bb = r.bbox();
                let c: Vec<f64> = bb.lo.iter().zip(&bb.hi).map(|(a, b)| 0.5 * (a + b)).collect();
                let d: Vec<f64> = bb.lo.iter().zip(&bb.hi).map(|(a, b)| (0.5 * (b - a)).powi(2)).collect();
                vec![(r.measure(), c, SquareMatrix::diag(&d))]
            }
            Kind::Linear { .. } => {
                if self.l1_bound() == Some(0.0) {
                    vec![]
                } else {
                    return Err(KfpError::Precondition("linear fields are not integrable".into()));
                }
            }
            Kind::Sum(parts) => {
                let mut out = vec![];
                for (w, f) in parts {
                    for (m, c, s) in f.cover()? {
                        out.push((m * w.abs(), c, s));
                    }
                }
                out
            }
        })
    }

    /// Covariance of the normalized |f| (mass-weighted over sum terms).
    pub fn spread(&self) -> Option<SquareMatrix> {
        match &self.kind {
            Kind::Gaussian(g) => Some(g.cov.clone()),
            Kind::Bump(b) => Some(b.spread()),
            Kind::Indicator(r) => {
                let bb = r.bbox();
                Some(SquareMatrix::diag(
                    &bb.lo.iter().zip(&bb.hi).map(|(a, b)| (b - a).powi(2) / 12.0).collect::<Vec<_>>(),
                ))
            }
            Kind::Linear { .. } => None,
            Kind::Sum(parts) => {
                let mut acc = SquareMatrix::zeros(self.dim);
                let mut mass = 0.0;
                for (w, f) in parts {
                    let m = w.abs() * f.l1_bound()?;
                    acc = acc.add(&f.spread()?.scale(m));
                    mass += m;
                }
                (mass > 0.0).then(|| acc.scale(1.0 / mass))
            }
        }
    }

    /// Draws Y with density |f_i|/Σ|w_j|‖f_j‖₁ over terms; returns the sign of the term
    /// drawn. Σ_i w_i ∫ g f_i = M · E[sign · g(Y)] with M = l1_bound().
    pub fn sample_mass(&self, rng: &mut impl Rng, out: &mut [f64]) -> f64 {
        match &self.kind {
            Kind::Gaussian(g) => {
                g.sample(rng, out);
                g.amplitude.signum()
            }
            Kind::Bump(b) => {
                b.sample(rng, out);
                b.amplitude.signum()
            }
            Kind::Indicator(r) => {
                r.sample_uniform(rng, out);
                1.0
            }
            Kind::Linear { .. } => {
                out.iter_mut().for_each(|v| *v = 0.0);
                0.0
            }
            Kind::Sum(parts) => {
                let total = self.l1_bound().unwrap_or(0.0);
                let mut u = rng.random::<f64>() * total;
                for (w, f) in parts {
                    let m = w.abs() * f.l1_bound().unwrap_or(0.0);
                    if u < m {
                        return w.signum() * f.sample_mass(rng, out);
                    }
                    u -= m;
                }
                let (w, f) = parts.last().expect("nonempty");
                w.signum() * f.sample_mass(rng, out)
            }
        }
    }

    /// Field can be sampled by sample_mass (integrable with positive mass).
    pub fn samplable(&self) -> bool {
        self.l1_bound().is_some_and(|m| m > 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate;

    #[test]
    fn bump_mass_matches_quadrature() {
        let b = ScalarField::bump(vec![0.3], SquareMatrix::diag(&[4.0]), 2.0, 3).unwrap();
        let q = integrate(|x| b.eval(&[x]), -0.2, 0.8, 1e-13, 1e-13);
        assert!((q.value - b.l1_bound().unwrap()).abs() < 1e-10);
    }

    #[test]
    fn gaussian_generator_laplace_1d() {
        let spec = crate::operator::catalog("laplace", 1).unwrap();
        let f = ScalarField::standard_gaussian(1);
        let x = 0.7f64;
        let exact = (x * x - 1.0) * (-x * x / 2.0).exp();
        assert!((f.generator(&spec, &[x]).unwrap() - exact).abs() < 1e-14);
    }

    #[test]
    fn json_field() {
        let f = ScalarField::from_json(r#"{"kind":"bump","center":[0,0],"radius":2,"order":3}"#).unwrap();
        assert_eq!(f.eval(&[0.0, 0.0]), 1.0);
        assert_eq!(f.eval(&[2.0, 0.0]), 0.0);
    }
}
