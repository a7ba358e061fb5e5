//! P_t and its adjoint by exact Gaussian sampling, L^p distances, and sampled
//! trajectories u ↦ P_u f(X) shared by the fractional and perimeter code.

use crate::error::{KfpError, Result};
use crate::field::ScalarField;
use crate::matlin::{mat_exp, psd_sqrt, sym_spectrum, SquareMatrix};
use crate::mc::{fill_normal, normal, run_blocks, run_blocks_vec, Accum, MCEstimate, McConfig};
use crate::operator::{covariance, density_with, CovarianceBundle, OperatorSpec};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

/// Y = e^{tB}X + L Z with L Lᵀ = 2tK(t).
pub fn sample_forward(cb: &CovarianceBundle, x: &[f64], rng: &mut impl Rng, out: &mut [f64]) {
    let n = x.len();
    let mut z = [0.0; 16];
    fill_normal(rng, &mut z[..n]);
    push_forward(cb, x, &z[..n], out);
}

#[inline]
fn push_forward(cb: &CovarianceBundle, x: &[f64], z: &[f64], out: &mut [f64]) {
    let n = x.len();
    for i in 0..n {
        let (e, f) = (cb.exp_tb.row(i), cb.factor.row(i));
        let mut v = 0.0;
        for j in 0..n {
            v += e[j] * x[j] + f[j] * z[j];
        }
        out[i] = v;
    }
}

fn require_n(cfg: &McConfig) -> Result<()> {
    if cfg.n == 0 {
        Err(KfpError::Domain("sample count must be positive".into()))
    } else {
        Ok(())
    }
}

/// Monte Carlo P_t f(X) from forward draws.
pub fn apply_semigroup(spec: &OperatorSpec, f: &ScalarField, x: &[f64], t: f64, cfg: &McConfig) -> Result<MCEstimate> {
    require_n(cfg)?;
    let cb = covariance(spec, t)?;
    let n = spec.dim;
    let acc = run_blocks(cfg, |rng, m, acc| {
        let mut y = vec![0.0; n];
        for _ in 0..m {
            sample_forward(&cb, x, rng, &mut y);
            acc.push(f.eval(&y));
        }
    });
    Ok(acc.estimate(cfg.seed))
}

/// Law of the kernel read in its first argument: mass e^{-t trB}, mean e^{-tB}X,
/// factor e^{-tB} L.
pub struct AdjointLaw {
    pub mass: f64,
    pub exp_neg: SquareMatrix,
    pub factor: SquareMatrix,
}

impl AdjointLaw {
    pub fn new(spec: &OperatorSpec, cb: &CovarianceBundle) -> Result<Self> {
        let exp_neg = mat_exp(&spec.b, -cb.t)?;
        let factor = exp_neg.matmul(&cb.factor);
        Ok(Self { mass: (-cb.t * spec.trace_b()).exp(), exp_neg, factor })
    }

    pub fn sample(&self, x: &[f64], rng: &mut impl Rng, out: &mut [f64]) {
        let n = x.len();
        let mut z = [0.0; 16];
        fill_normal(rng, &mut z[..n]);
        for i in 0..n {
            let (e, f) = (self.exp_neg.row(i), self.factor.row(i));
            out[i] = (0..n).map(|j| e[j] * x[j] + f[j] * z[j]).sum();
        }
    }
}

/// Monte Carlo P*_t f(X) = ∫ p(Y,X,t) f(Y) dY.
pub fn apply_adjoint(spec: &OperatorSpec, f: &ScalarField, x: &[f64], t: f64, cfg: &McConfig) -> Result<MCEstimate> {
    require_n(cfg)?;
    let cb = covariance(spec, t)?;
    let law = AdjointLaw::new(spec, &cb)?;
    let n = spec.dim;
    let acc = run_blocks(cfg, |rng, m, acc| {
        let mut y = vec![0.0; n];
        for _ in 0..m {
            law.sample(x, rng, &mut y);
            acc.push(law.mass * f.eval(&y));
        }
    });
    Ok(acc.estimate(cfg.seed))
}

/// |P_{s+t} f(X) - P_s(P_t f)(X)| over its combined standard error. The nested route
/// uses √n outer draws with √n inner draws each.
pub fn chapman_kolmogorov_residual(
    spec: &OperatorSpec,
    f: &ScalarField,
    x: &[f64],
    s: f64,
    t: f64,
    cfg: &McConfig,
) -> Result<(f64, MCEstimate, MCEstimate)> {
    require_n(cfg)?;
    let direct = apply_semigroup(spec, f, x, s + t, &cfg.derive(1))?;
    let cs = covariance(spec, s)?;
    let ct = covariance(spec, t)?;
    let m = (cfg.n as f64).sqrt().ceil() as usize;
    let n = spec.dim;
    let outer_cfg = cfg.derive(2).with_n(m);
    let acc = run_blocks(&outer_cfg, |rng, k, acc| {
        let (mut y, mut w) = (vec![0.0; n], vec![0.0; n]);
        for _ in 0..k {
            sample_forward(&cs, x, rng, &mut y);
            let mut inner = 0.0;
            for _ in 0..m {
                sample_forward(&ct, &y, rng, &mut w);
                inner += f.eval(&w);
            }
            acc.push(inner / m as f64);
        }
    });
    let nested = acc.estimate(outer_cfg.seed);
    Ok((direct.z_score(&nested), direct, nested))
}

/// Importance density: a gaussian mixture with an optional multivariate Student-t
/// component for heavy tails.
#[derive(Debug, Clone)]
pub struct Proposal {
    comps: Vec<Component>,
    student: Option<(f64, Component)>,
    student_weight: f64,
}

#[derive(Debug, Clone)]
struct Component {
    weight: f64,
    center: Vec<f64>,
    root: SquareMatrix,
    prec: SquareMatrix,
    log_norm: f64,
}

impl Component {
    fn new(weight: f64, center: Vec<f64>, cov: &SquareMatrix) -> Result<Self> {
        let sp = sym_spectrum(cov)?;
        if !(sp.min_eig > 0.0) {
            return Err(KfpError::IllConditionedSampler("proposal covariance is singular".into()));
        }
        let n = center.len() as f64;
        Ok(Self {
            weight,
            root: psd_sqrt(cov)?,
            prec: cov.inverse()?.symmetrize(),
            log_norm: -0.5 * n * (2.0 * PI).ln() - 0.5 * sp.det.ln(),
            center,
        })
    }

    fn maha(&self, y: &[f64]) -> f64 {
        let d: Vec<f64> = y.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let w = self.prec.mul_vec(&d);
        w.iter().zip(&d).map(|(a, b)| a * b).sum()
    }
}

impl Proposal {
    /// Gaussian mixture from (weight, center, covariance) triples.
    pub fn mixture(parts: &[(f64, Vec<f64>, SquareMatrix)]) -> Result<Self> {
        if parts.is_empty() {
            return Err(KfpError::IllConditionedSampler("empty proposal".into()));
        }
        let total: f64 = parts.iter().map(|p| p.0).sum();
        let comps = parts
            .iter()
            .map(|(w, c, s)| Component::new(w / total, c.clone(), s))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { comps, student: None, student_weight: 0.0 })
    }

    /// Adds a Student-t component with `df` degrees of freedom and the given weight.
    pub fn with_student(mut self, weight: f64, df: f64, center: Vec<f64>, scale: &SquareMatrix) -> Result<Self> {
        let c = Component::new(1.0, center, scale)?;
        self.student = Some((df, c));
        self.student_weight = weight.clamp(0.0, 0.9);
        Ok(self)
    }

    /// Covering density for fields: each cover component inflated by `inflate`, plus a
    /// wide Student-t component over the mass-weighted spread.
    pub fn covering(fields: &[&ScalarField], inflate: f64, student_weight: f64) -> Result<Self> {
        let mut parts = vec![];
        for f in fields {
            for (w, c, s) in f.cover()? {
                if w > 0.0 {
                    parts.push((w, c, s.scale(inflate)));
                }
            }
        }
        if parts.is_empty() {
            return Err(KfpError::IllConditionedSampler("fields carry no mass".into()));
        }
        let n = parts[0].1.len();
        let total: f64 = parts.iter().map(|p| p.0).sum();
        let mut mean = vec![0.0; n];
        for (w, c, _) in &parts {
            for (m, v) in mean.iter_mut().zip(c) {
                *m += w / total * v;
            }
        }
        let mut spread = SquareMatrix::zeros(n);
        for (w, c, s) in &parts {
            let d: Vec<f64> = c.iter().zip(&mean).map(|(a, b)| a - b).collect();
            let mut outer = SquareMatrix::zeros(n);
            for i in 0..n {
                for j in 0..n {
                    outer.set(i, j, d[i] * d[j]);
                }
            }
            spread = spread.add(&s.add(&outer).scale(w / total));
        }
        let base = Self::mixture(&parts)?;
        if student_weight > 0.0 {
            base.with_student(student_weight, 1.0, mean, &spread.scale(4.0))
        } else {
            Ok(base)
        }
    }

    pub fn dim(&self) -> usize {
        self.comps[0].center.len()
    }

    pub fn sample(&self, rng: &mut impl Rng, out: &mut [f64]) {
        let n = out.len();
        let mut z = [0.0; 16];
        if let Some((df, c)) = &self.student {
            if rng.random::<f64>() < self.student_weight {
                fill_normal(rng, &mut z[..n]);
                let chi: f64 = ChiSquared::new(*df).expect("df > 0").sample(rng);
                let k = (df / chi.max(1e-300)).sqrt();
                c.root.mul_vec_into(&z[..n], out);
                for (o, m) in out.iter_mut().zip(&c.center) {
                    *o = m + k * *o;
                }
                return;
            }
        }
        let mut u = rng.random::<f64>();
        let mut pick = &self.comps[self.comps.len() - 1];
        for c in &self.comps {
            if u < c.weight {
                pick = c;
                break;
            }
            u -= c.weight;
        }
        fill_normal(rng, &mut z[..n]);
        pick.root.mul_vec_into(&z[..n], out);
        for (o, m) in out.iter_mut().zip(&pick.center) {
            *o += m;
        }
    }

    pub fn density(&self, y: &[f64]) -> f64 {
        let n = y.len() as f64;
        let g: f64 = self.comps.iter().map(|c| c.weight * (c.log_norm - 0.5 * c.maha(y)).exp()).sum();
        match &self.student {
            Some((df, c)) => {
                let ln_t = ln_gamma((df + n) / 2.0) - ln_gamma(df / 2.0) - 0.5 * n * (df * PI).ln()
                    + c.log_norm
                    + 0.5 * n * (2.0 * PI).ln()
                    - 0.5 * (df + n) * (1.0 + c.maha(y) / df).ln();
                (1.0 - self.student_weight) * g + self.student_weight * ln_t.exp()
            }
            None => g,
        }
    }

    /// Rejects a proposal that misses a cover component of the target: no component
    /// within a scale ratio of 1e3 whose 5σ ellipsoid contains the target center.
    pub fn check_coverage(&self, target: &[(f64, Vec<f64>, SquareMatrix)]) -> Result<()> {
        for (_, c, s) in target {
            let n = c.len() as f64;
            let det = sym_spectrum(s)?.det;
            let ok = self.comps.iter().chain(self.student.as_ref().map(|p| &p.1)).any(|p| {
                let pdet = (-2.0 * (p.log_norm + 0.5 * n * (2.0 * PI).ln())).exp();
                let ratio = (det / pdet).powf(0.5 / n);
                (1e-3..=1e3).contains(&ratio) && p.maha(c) <= 25.0
            });
            if !ok {
                return Err(KfpError::IllConditionedSampler(
                    "importance density does not cover the target support (scale ratio > 1e3)".into(),
                ));
            }
        }
        Ok(())
    }
}

/// ‖h‖_p for a pointwise function by importance sampling; p ∈ {1, 2}. For p = 2 the
/// standard error is carried through the square root by the delta method.
pub fn lp_norm_with(h: impl Fn(&[f64]) -> f64 + Sync, p: u32, proposal: &Proposal, cfg: &McConfig) -> Result<MCEstimate> {
    require_n(cfg)?;
    if p != 1 && p != 2 {
        return Err(KfpError::Domain(format!("p must be 1 or 2, got {p}")));
    }
    let n = proposal.dim();
    let acc = run_blocks(cfg, |rng, m, acc| {
        let mut y = vec![0.0; n];
        for _ in 0..m {
            proposal.sample(rng, &mut y);
            let v = h(&y).abs();
            let q = proposal.density(&y);
            acc.push(if q > 0.0 { v.powi(p as i32) / q } else { 0.0 });
        }
    });
    let e = acc.estimate(cfg.seed);
    Ok(if p == 1 {
        e
    } else {
        let v = e.value.max(0.0).sqrt();
        MCEstimate { value: v, std_error: if v > 0.0 { e.std_error / (2.0 * v) } else { e.std_error.sqrt() }, ..e }
    })
}

/// Importance density choice for lp_distance.
#[derive(Debug, Clone, Default)]
pub enum Sampler {
    /// Gaussian mixture over both fields' supports (covariances doubled) plus a
    /// Student-t component.
    #[default]
    Auto,
    Custom(Proposal),
}

/// ‖f - g‖_p by importance sampling.
pub fn lp_distance(f: &ScalarField, g: &ScalarField, p: u32, sampler: &Sampler, cfg: &McConfig) -> Result<MCEstimate> {
    if f.dim() != g.dim() {
        return Err(KfpError::InvalidInput("fields differ in dimension".into()));
    }
    let proposal = match sampler {
        Sampler::Auto => Proposal::covering(&[f, g], 2.0, 0.1)?,
        Sampler::Custom(p) => {
            let mut target = f.cover()?;
            target.extend(g.cover()?);
            p.check_coverage(&target)?;
            p.clone()
        }
    };
    lp_norm_with(|y| f.eval(y) - g.eval(y), p, &proposal, cfg)
}

/// |P_t f(X)| V(t) / ‖f‖₁; bounded by c_N = sup_Y p(X,Y,t) V(t) for p = 1.
pub fn ultracontractive_ratio(spec: &OperatorSpec, f: &ScalarField, x: &[f64], t: f64, cfg: &McConfig) -> Result<MCEstimate> {
    let l1 = f.l1_bound().ok_or_else(|| KfpError::Precondition("field must be integrable".into()))?;
    let v = covariance(spec, t)?.volume;
    let e = apply_semigroup(spec, f, x, t, cfg)?;
    let k = v / l1;
    Ok(MCEstimate { value: e.value.abs() * k, std_error: e.std_error * k, ..e })
}

/// Per-node data for sampling u ↦ P_u f(X).
struct TrajNode {
    cb: CovarianceBundle,
    mean: Vec<f64>,
    kernel_weight: f64,
}

/// Sampled trajectory φ(u) = P_u f(X) on a fixed set of times. Each draw produces a
/// whole path from one kernel normal Z (antithetic pair) and one field draw Y:
///
///   φ_i(u) = w(u)·½[f(m_u + L_u Z) + f(m_u - L_u Z)] + (1 - w(u))·M·sign·p(X, Y, u)
///
/// where M ≥ ‖f‖₁ is the sampled mass. Both terms are unbiased for P_u f(X). The blend
/// weight w moves smoothly from 1 to 0 as the kernel spread passes the field's spread,
/// so each path is smooth in u and integrals of it have finite variance.
pub struct Trajectory<'a> {
    spec: &'a OperatorSpec,
    field: &'a ScalarField,
    x: Vec<f64>,
    nodes: Vec<TrajNode>,
    mass: f64,
}

/// Kernel weight as a function of ρ = (det Σ_u / det C_f)^{1/N}: 1 below 1/4, 0 above 4.
fn blend(rho: f64) -> f64 {
    let z = ((rho.ln() - 0.25f64.ln()) / 16f64.ln()).clamp(0.0, 1.0);
    1.0 - z * z * (3.0 - 2.0 * z)
}

impl<'a> Trajectory<'a> {
    pub fn new(spec: &'a OperatorSpec, field: &'a ScalarField, x: &[f64], times: &[f64]) -> Result<Self> {
        if field.dim() != spec.dim || x.len() != spec.dim {
            return Err(KfpError::InvalidInput("field, point and operator differ in dimension".into()));
        }
        let n = spec.dim as f64;
        let spread_det = if field.samplable() {
            field.spread().map(|s| sym_spectrum(&s).map(|sp| sp.det)).transpose()?
        } else {
            None
        };
        let nodes = times
            .iter()
            .map(|&u| {
                let cb = covariance(spec, u)?;
                let kernel_weight = match spread_det {
                    Some(d) if d > 0.0 => blend((2f64.powf(n) * cb.det_tk / d).powf(1.0 / n)),
                    _ => 1.0,
                };
                Ok(TrajNode { mean: cb.mean(x), cb, kernel_weight })
            })
            .collect::<Result<Vec<_>>>()?;
        let mass = field.l1_bound().unwrap_or(0.0);
        Ok(Self { spec, field, x: x.to_vec(), nodes, mass })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// One sampled path into `out`.
    pub fn draw(&self, rng: &mut impl Rng, out: &mut [f64]) {
        let n = self.spec.dim;
        let mut z = [0.0; 16];
        for v in z[..n].iter_mut() {
            *v = normal(rng);
        }
        let needs_field = self.nodes.iter().any(|nd| nd.kernel_weight < 1.0);
        let mut y = [0.0; 16];
        let sign = if needs_field { self.field.sample_mass(rng, &mut y[..n]) } else { 0.0 };
        let (mut a, mut b) = ([0.0; 16], [0.0; 16]);
        for (o, nd) in out.iter_mut().zip(&self.nodes) {
            let mut v = 0.0;
            if nd.kernel_weight > 0.0 {
                for i in 0..n {
                    let f = nd.cb.factor.row(i);
                    let lz: f64 = (0..n).map(|j| f[j] * z[j]).sum();
                    a[i] = nd.mean[i] + lz;
                    b[i] = nd.mean[i] - lz;
                }
                v += nd.kernel_weight * 0.5 * (self.field.eval(&a[..n]) + self.field.eval(&b[..n]));
            }
            if nd.kernel_weight < 1.0 {
                v += (1.0 - nd.kernel_weight) * self.mass * sign * density_with(&nd.cb, n, &self.x, &y[..n]);
            }
            *o = v;
        }
    }

    /// Monte Carlo estimates of the linear functionals Σ_j rows[k][j] φ(u_j).
    pub fn functionals(&self, rows: &[Vec<f64>], cfg: &McConfig) -> Result<Vec<MCEstimate>> {
        require_n(cfg)?;
        if rows.iter().any(|r| r.len() != self.nodes.len()) {
            return Err(KfpError::InvalidInput("functional length differs from node count".into()));
        }
        let accs = run_blocks_vec(cfg, rows.len(), |rng, m, acc: &mut [Accum]| {
            let mut path = vec![0.0; self.nodes.len()];
            for _ in 0..m {
                self.draw(rng, &mut path);
                for (a, r) in acc.iter_mut().zip(rows) {
                    a.push(r.iter().zip(&path).map(|(c, v)| c * v).sum());
                }
            }
        });
        Ok(accs.iter().map(|a| a.estimate(cfg.seed)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::catalog;

    #[test]
    fn constant_is_preserved_exactly() {
        let spec = catalog("kramers", 2).unwrap();
        let f = ScalarField::constant(2, 1.0);
        let e = apply_semigroup(&spec, &f, &[0.3, -0.2], 0.7, &McConfig::new(1000, 3)).unwrap();
        assert_eq!(e.value, 1.0);
        assert_eq!(e.std_error, 0.0);
    }

    #[test]
    fn zero_samples_rejected() {
        let spec = catalog("laplace", 1).unwrap();
        let f = ScalarField::constant(1, 1.0);
        assert!(apply_semigroup(&spec, &f, &[0.0], 1.0, &McConfig::new(0, 3)).is_err());
    }

    #[test]
    fn blend_is_monotone() {
        assert_eq!(blend(0.1), 1.0);
        assert_eq!(blend(10.0), 0.0);
        assert!(blend(0.9) > blend(1.1));
    }
}
