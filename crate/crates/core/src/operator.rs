//! Operators tr(Q∇²) + <BX, ∇>: covariance, volume, kernel, intrinsic dimensions.

use crate::error::{KfpError, Result};
use crate::matlin::{correlation, mat_exp, psd_sqrt, sym_spectrum, SquareMatrix};
use crate::quad::simpson_vec;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

/// Volume of the unit ball in R^n.
pub fn omega(n: usize) -> f64 {
    PI.powf(n as f64 / 2.0) / gamma(n as f64 / 2.0 + 1.0)
}

/// Kernel normalization: p = c_n / V(t) · exp(-m²/4t).
pub fn kernel_constant(n: usize) -> f64 {
    omega(n) * (4.0 * PI).powf(-(n as f64) / 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub dim: usize,
    #[serde(rename = "Q")]
    pub q: SquareMatrix,
    #[serde(rename = "B")]
    pub b: SquareMatrix,
    #[serde(default)]
    pub name: Option<String>,
}

impl OperatorSpec {
    /// Validates shapes and Q ⪰ 0; round-off negative eigenvalues of Q are clamped.
    pub fn new(q: SquareMatrix, b: SquareMatrix, name: Option<String>) -> Result<Self> {
        if q.dim() != b.dim() {
            return Err(KfpError::InvalidInput("Q and B differ in size".into()));
        }
        if !q.is_symmetric(1e-10) {
            return Err(KfpError::InvalidInput("Q is not symmetric".into()));
        }
        let root = psd_sqrt(&q)?;
        let q = root.matmul(&root).symmetrize();
        Ok(Self { dim: q.dim(), q, b, name })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: OperatorSpec =
            serde_json::from_str(text).map_err(|e| KfpError::InvalidInput(e.to_string()))?;
        if raw.dim != raw.q.dim() {
            return Err(KfpError::InvalidInput(format!(
                "dim = {} but Q is {}x{}",
                raw.dim,
                raw.q.dim(),
                raw.q.dim()
            )));
        }
        Self::new(raw.q, raw.b, raw.name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("spec serializes")
    }

    pub fn trace_b(&self) -> f64 {
        self.b.trace()
    }

    /// tr B >= 0.
    pub fn trace_flag(&self) -> bool {
        self.trace_b() >= 0.0
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| format!("custom({})", self.dim))
    }

    pub fn require_trace(&self) -> Result<()> {
        if self.trace_flag() {
            Ok(())
        } else {
            Err(KfpError::TraceCondition(self.trace_b()))
        }
    }
}

/// Catalog of named operators.
pub fn catalog(name: &str, size: usize) -> Result<OperatorSpec> {
    match name {
        "laplace" => {
            let n = size.max(1);
            OperatorSpec::new(SquareMatrix::identity(n), SquareMatrix::zeros(n), Some(format!("laplace({n})")))
        }
        "kolmogorov" => {
            let k = size.max(1);
            let n = 2 * k;
            let mut qd = vec![0.0; n];
            qd[..k].iter_mut().for_each(|v| *v = 1.0);
            let mut b = SquareMatrix::zeros(n);
            for i in 0..k {
                b.set(k + i, i, 1.0);
            }
            OperatorSpec::new(SquareMatrix::diag(&qd), b, Some(format!("kolmogorov({k})")))
        }
        "kramers" => OperatorSpec::new(
            SquareMatrix::diag(&[1.0, 0.0]),
            SquareMatrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]])?,
            Some("kramers".into()),
        ),
        "ornstein_uhlenbeck" | "ou" => {
            let n = size.max(1);
            OperatorSpec::new(
                SquareMatrix::identity(n),
                SquareMatrix::identity(n).scale(-1.0),
                Some(format!("ornstein_uhlenbeck({n})")),
            )
        }
        other => Err(KfpError::NotFound(format!("operator '{other}'"))),
    }
}

/// Parses "name" or "name:size" (default sizes: laplace 2, kolmogorov 1, OU 2).
pub fn catalog_from_str(s: &str) -> Result<OperatorSpec> {
    let (name, size) = match s.split_once(':') {
        Some((n, k)) => {
            let k = k.parse::<usize>().map_err(|_| KfpError::InvalidInput(format!("bad size in '{s}'")))?;
            (n, k)
        }
        None => (s, if s == "kolmogorov" { 1 } else { 2 }),
    };
    catalog(name, size)
}

/// Snapshot of everything the kernel needs at one time t.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceBundle {
    pub t: f64,
    pub k: SquareMatrix,
    pub tk: SquareMatrix,
    pub sqrt_2tk: SquareMatrix,
    pub det_tk: f64,
    pub volume: f64,
    pub exp_tb: SquareMatrix,
    /// Factor L with L Lᵀ = 2tK built through the diagonal rescaling of tK; accurate
    /// for sampling even when tK spans many decades.
    pub factor: SquareMatrix,
    /// (tK)^{-1}.
    pub tk_inv: SquareMatrix,
    /// Smallest eigenvalue of the diagonally rescaled K(t).
    pub scaled_min_eig: f64,
}

impl CovarianceBundle {
    /// Mean of the forward law, e^{tB}X.
    pub fn mean(&self, x: &[f64]) -> Vec<f64> {
        self.exp_tb.mul_vec(x)
    }

    /// m_t(X,Y)² / t = <(tK)^{-1} d, d>, d = Y - e^{tB}X.
    pub fn quad_form(&self, x: &[f64], y: &[f64]) -> f64 {
        let mu = self.exp_tb.mul_vec(x);
        let d: Vec<f64> = y.iter().zip(&mu).map(|(a, b)| a - b).collect();
        let w = self.tk_inv.mul_vec(&d);
        w.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>().max(0.0)
    }
}

fn vanloan(spec: &OperatorSpec, h: f64) -> Result<(SquareMatrix, SquareMatrix)> {
    let n = spec.dim;
    let m = SquareMatrix::block2(&spec.b, &spec.q, &SquareMatrix::zeros(n), &spec.b.transpose().scale(-1.0))?;
    let e = mat_exp(&m, h)?;
    let f11 = e.sub_block(0, 0, n);
    let f12 = e.sub_block(0, 1, n);
    Ok((f12.matmul(&f11.transpose()).symmetrize(), f11))
}

/// ∫₀ᵗ e^{sB} Q e^{sBᵀ} ds by the block exponential on a short step followed by doubling
/// W(2h) = W(h) + e^{hB} W(h) e^{hBᵀ}, which avoids overflow of e^{-tBᵀ} for large t.
pub fn gramian(spec: &OperatorSpec, t: f64) -> Result<(SquareMatrix, SquareMatrix)> {
    let nb = spec.b.norm1().max(spec.q.norm1());
    let doublings = if nb * t > 1.0 { (nb * t).log2().ceil() as i32 } else { 0 };
    let h = t / 2f64.powi(doublings);
    let (mut w, mut e) = vanloan(spec, h)?;
    for _ in 0..doublings {
        w = w.add(&e.matmul(&w).matmul(&e.transpose())).symmetrize();
        e = e.matmul(&e);
    }
    Ok((w, e))
}

/// Same integral by adaptive Simpson on the defining integrand.
pub fn gramian_by_quadrature(spec: &OperatorSpec, t: f64, rel_tol: f64) -> Result<SquareMatrix> {
    let n = spec.dim;
    mat_exp(&spec.b, t)?;
    let integrand = |s: f64| {
        let e = mat_exp(&spec.b, s).expect("checked at the endpoint");
        e.matmul(&spec.q).matmul(&e.transpose()).data().to_vec()
    };
    let v = simpson_vec(&integrand, 0.0, t, rel_tol);
    Ok(SquareMatrix::new(n, v)?.symmetrize())
}

pub const HYPOELLIPTIC_TOL: f64 = 1e-12;

pub fn covariance(spec: &OperatorSpec, t: f64) -> Result<CovarianceBundle> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(KfpError::Domain(format!("covariance needs t > 0, got {t}")));
    }
    let n = spec.dim;
    let (tk, _) = gramian(spec, t)?;
    let exp_tb = mat_exp(&spec.b, t)?;
    let k = tk.scale(1.0 / t);
    let Some((corr, scales)) = correlation(&k) else {
        return Err(KfpError::Hypoellipticity { t, min_eig: 0.0 });
    };
    let cspec = sym_spectrum(&corr)?;
    if cspec.min_eig <= HYPOELLIPTIC_TOL {
        return Err(KfpError::Hypoellipticity { t, min_eig: cspec.min_eig });
    }
    let tscale: Vec<f64> = scales.iter().map(|d| d * t.sqrt()).collect();
    let det_tk = cspec.det * tscale.iter().map(|d| d * d).product::<f64>();
    let volume = crate::operator::omega(n) * det_tk.sqrt();

    let croot = psd_sqrt(&corr)?;
    let mut factor = SquareMatrix::zeros(n);
    let mut tk_inv = SquareMatrix::zeros(n);
    let cinv = corr.inverse()?;
    for i in 0..n {
        for j in 0..n {
            factor.set(i, j, 2f64.sqrt() * tscale[i] * croot.get(i, j));
            tk_inv.set(i, j, cinv.get(i, j) / (tscale[i] * tscale[j]));
        }
    }
    let sqrt_2tk = psd_sqrt(&tk.scale(2.0))?;
    Ok(CovarianceBundle {
        t,
        k,
        tk,
        sqrt_2tk,
        det_tk,
        volume,
        exp_tb,
        factor,
        tk_inv: tk_inv.symmetrize(),
        scaled_min_eig: cspec.min_eig,
    })
}

/// Primary route plus the quadrature cross-check; fails if they disagree.
pub fn covariance_checked(spec: &OperatorSpec, t: f64) -> Result<CovarianceBundle> {
    let bundle = covariance(spec, t)?;
    let oracle = gramian_by_quadrature(spec, t, 1e-10)?;
    let gap = gramian_gap(&bundle.tk, &oracle);
    if gap > 1e-8 {
        return Err(KfpError::InvalidInput(format!("block-exponential and quadrature Gramians differ by {gap:e}")));
    }
    Ok(bundle)
}

/// Entrywise gap relative to sqrt(|a_ii a_jj|).
pub fn gramian_gap(a: &SquareMatrix, b: &SquareMatrix) -> f64 {
    let n = a.dim();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let s = (a.get(i, i) * a.get(j, j)).abs().sqrt().max(f64::MIN_POSITIVE);
            worst = worst.max((a.get(i, j) - b.get(i, j)).abs() / s);
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HypoellipticReport {
    pub hypoelliptic: bool,
    pub worst_min_eig: f64,
}

pub fn default_time_grid() -> Vec<f64> {
    log_grid(1e-4, 1e4, 32)
}

pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

/// Smallest eigenvalue of the diagonally rescaled K(t) over the grid.
pub fn check_hypoelliptic(spec: &OperatorSpec, grid: &[f64]) -> HypoellipticReport {
    let mut worst = f64::INFINITY;
    for &t in grid {
        let eig = match gramian(spec, t) {
            Ok((tk, _)) => match correlation(&tk.scale(1.0 / t)) {
                Some((c, _)) => sym_spectrum(&c).map(|s| s.min_eig).unwrap_or(0.0),
                None => 0.0,
            },
            Err(_) => 0.0,
        };
        worst = worst.min(eig);
    }
    HypoellipticReport { hypoelliptic: worst > HYPOELLIPTIC_TOL, worst_min_eig: worst }
}

/// Kalman rank of [Q^{1/2}, B Q^{1/2}, ..., B^{N-1} Q^{1/2}].
pub fn kalman_rank(spec: &OperatorSpec) -> usize {
    let n = spec.dim;
    let root = psd_sqrt(&spec.q).expect("Q validated at construction").to_nalgebra();
    let b = spec.b.to_nalgebra();
    let mut blocks = Vec::with_capacity(n);
    let mut cur = root;
    for _ in 0..n {
        blocks.push(cur.clone());
        cur = &b * cur;
    }
    let mut m = nalgebra::DMatrix::zeros(n, n * n);
    for (k, blk) in blocks.iter().enumerate() {
        m.view_mut((0, k * n), (n, n)).copy_from(blk);
    }
    m.rank(1e-10 * (1.0 + m.amax()))
}

pub fn volume(spec: &OperatorSpec, t: f64) -> Result<f64> {
    Ok(covariance(spec, t)?.volume)
}

pub fn pseudo_distance(spec: &OperatorSpec, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    let c = covariance(spec, t)?;
    Ok((t * c.quad_form(x, y)).sqrt())
}

pub fn kernel_density(spec: &OperatorSpec, x: &[f64], y: &[f64], t: f64) -> Result<f64> {
    let c = covariance(spec, t)?;
    Ok(density_with(&c, spec.dim, x, y))
}

/// Kernel density for a precomputed bundle.
pub fn density_with(c: &CovarianceBundle, n: usize, x: &[f64], y: &[f64]) -> f64 {
    kernel_constant(n) / c.volume * (-c.quad_form(x, y) / 4.0).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Homogeneous,
    Crossing,
    Expanding,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionReport {
    #[serde(rename = "D0")]
    pub d0: f64,
    #[serde(rename = "Dinf")]
    pub dinf: f64,
    pub regime: Regime,
    pub residual0: f64,
    pub residual_inf: f64,
    pub warnings: Vec<String>,
}

impl DimensionReport {
    /// Fitted dimensions snapped to the nearest integer when within 0.02 of it.
    pub fn snapped(&self) -> (f64, f64) {
        let snap = |d: f64| if (d - d.round()).abs() < 0.02 { d.round() } else { d };
        (snap(self.d0), snap(self.dinf))
    }
}

fn slope_fit(spec: &OperatorSpec, lo: f64, hi: f64) -> Result<(f64, f64)> {
    let ts = log_grid(lo, hi, 17);
    let mut xs = Vec::with_capacity(ts.len());
    let mut ys = Vec::with_capacity(ts.len());
    for &t in &ts {
        xs.push(t.ln());
        ys.push(volume(spec, t)?.ln());
    }
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let rms = (xs.iter().zip(&ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum::<f64>() / m).sqrt();
    Ok((2.0 * slope, rms))
}

pub fn intrinsic_dimensions(spec: &OperatorSpec) -> Result<DimensionReport> {
    let (d0, r0) = slope_fit(spec, 1e-4, 1e-2)?;
    let (dinf, rinf) = slope_fit(spec, 1e2, 1e4)?;
    let mut warnings = Vec::new();
    if r0 > 0.05 {
        warnings.push(format!("log V is not a power law near 0 (residual {r0:.3})"));
    }
    if rinf > 0.05 {
        warnings.push(format!("log V is not a power law at infinity (residual {rinf:.3}); possible exponential growth"));
    }
    let regime = if (d0 - dinf).abs() <= 0.1 {
        Regime::Homogeneous
    } else if d0 > dinf {
        Regime::Crossing
    } else {
        Regime::Expanding
    };
    Ok(DimensionReport { d0, dinf, regime, residual0: r0, residual_inf: rinf, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplace_identity_k() {
        let s = catalog("laplace", 2).unwrap();
        let c = covariance(&s, 3.0).unwrap();
        assert!(c.k.sub(&SquareMatrix::identity(2)).max_abs() < 1e-14);
    }

    #[test]
    fn unknown_catalog_name() {
        assert!(matches!(catalog("heisenberg", 1), Err(KfpError::NotFound(_))));
    }

    #[test]
    fn nonpositive_time() {
        let s = catalog("laplace", 2).unwrap();
        assert!(matches!(covariance(&s, 0.0), Err(KfpError::Domain(_))));
    }

    #[test]
    fn degenerate_operator_rejected() {
        let s = OperatorSpec::new(SquareMatrix::zeros(2), SquareMatrix::zeros(2), None).unwrap();
        assert!(matches!(covariance(&s, 1.0), Err(KfpError::Hypoellipticity { .. })));
        assert!(!check_hypoelliptic(&s, &default_time_grid()).hypoelliptic);
        assert_eq!(kalman_rank(&s), 0);
    }
}
