//! One-shot verification suite. Every check carries the number of the acceptance
//! criterion it covers; `core` runs with reduced sample counts, `full` with the
//! production ones.

use kfp_core::besov::{besov_seminorm, coarea_residual, sobolev_ratio, LevelSetProfile};
use kfp_core::field::ScalarField;
use kfp_core::fractional::{
    additivity_residual, balakrishnan_apply, ell_l1, ell_l1_closed, inversion_residual, ledoux_check, FracQuadSpec,
};
use kfp_core::matlin::SquareMatrix;
use kfp_core::mc::{run_blocks, McConfig};
use kfp_core::operator::{
    catalog, catalog_from_str, covariance, density_with, intrinsic_dimensions, omega, CovarianceBundle, OperatorSpec,
};
use kfp_core::perimeter::{
    a_const, bbm_upper_bound, frac_perimeter, heat_content_deficit, heat_content_deficit_direct, interpolation_bound,
    iso_ratio_sweep, kernel_square_integral, perbelow_gap, Interpolant, RegimeCase, TwoRegime,
};
use kfp_core::quad::integrate_to_infinity;
use kfp_core::region::Region;
use kfp_core::semigroup::AdjointLaw;
use kfp_core::Result;
use rand::Rng;
use serde::Serialize;
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy)]
pub struct Ctx {
    pub full: bool,
    pub seed: u64,
    pub workers: usize,
    /// Overrides every sample count when set.
    pub samples: Option<usize>,
    /// Multiplier on the kernel normalization in the mass checks; 1 except in mutation runs.
    pub kernel_scale: f64,
}

impl Ctx {
    pub fn new(full: bool, seed: u64) -> Self {
        Self { full, seed, workers: kfp_core::mc::DEFAULT_WORKERS, samples: None, kernel_scale: 1.0 }
    }

    fn n(&self, core: usize, full: usize) -> usize {
        self.samples.unwrap_or(if self.full { full } else { core })
    }

    fn mc(&self, core: usize, full: usize, tag: u64) -> McConfig {
        McConfig::new(self.n(core, full), self.seed).with_workers(self.workers).derive(tag)
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub note: String,
}

impl Outcome {
    fn at_most(measured: f64, tolerance: f64) -> Self {
        Self { measured, tolerance, pass: measured <= tolerance, note: String::new() }
    }

    fn at_least(measured: f64, tolerance: f64) -> Self {
        Self { measured, tolerance, pass: measured >= tolerance, note: String::new() }
    }

    fn note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    fn and(mut self, cond: bool, why: &str) -> Self {
        if !cond {
            self.pass = false;
            self.note = if self.note.is_empty() { why.to_string() } else { format!("{}; {why}", self.note) };
        }
        self
    }
}

pub struct Check {
    pub criterion: u8,
    pub name: &'static str,
    pub anchor: &'static str,
    run: fn(&Ctx) -> Result<Outcome>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub criterion: u8,
    pub check: String,
    pub anchor: String,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub note: String,
}

pub fn run_check(c: &Check, ctx: &Ctx) -> CheckResult {
    let out = (c.run)(ctx).unwrap_or_else(|e| Outcome {
        measured: f64::NAN,
        tolerance: f64::NAN,
        pass: false,
        note: format!("error: {e}"),
    });
    CheckResult {
        criterion: c.criterion,
        check: c.name.to_string(),
        anchor: c.anchor.to_string(),
        measured: out.measured,
        tolerance: out.tolerance,
        pass: out.pass,
        note: out.note,
    }
}

/// Checks of the requested criteria (all when `only` is empty), in registry order.
pub fn selected(only: &[u8]) -> Vec<Check> {
    registry()
        .into_iter()
        .filter(|c| only.is_empty() || only.contains(&c.criterion))
        .collect()
}

pub fn run_suite(ctx: &Ctx, only: &[u8]) -> Vec<CheckResult> {
    selected(only).iter().map(|c| run_check(c, ctx)).collect()
}

macro_rules! check {
    ($crit:expr, $name:expr, $anchor:expr, $f:expr) => {
        Check { criterion: $crit, name: $name, anchor: $anchor, run: $f }
    };
}

pub fn registry() -> Vec<Check> {
    vec![
        check!(1, "c01-covariance-golden", "K(1) of kolmogorov(1) is [[1, 1/2], [1/2, 1/3]]", covariance_golden),
        check!(2, "c02-volume-laplace", "V(t) = w_N t^(N/2) for the Laplacian", volume_laplace),
        check!(2, "c02-volume-kolmogorov", "det tK(t) = t^4/12 for kolmogorov(1)", volume_kolmogorov),
        check!(2, "c02-volume-kramers", "V(t) = pi (t^2/4 + (cos 2t - 1)/8)^(1/2) for kramers", volume_kramers),
        check!(3, "c03-kernel-mass-forward", "integral of p(X, ., t) is 1", mass_forward),
        check!(3, "c03-kernel-mass-adjoint", "integral of p(., Y, t) is exp(-t tr B)", mass_adjoint),
        check!(3, "c03-ou-adjoint-growth", "adjoint mass of the OU operator is exp(N t)", mass_ou),
        check!(4, "c04-intrinsic-dimensions", "(D0, Dinf) = (2,2), (4,4), (4,2)", intrinsic),
        check!(5, "c05-ell-closed-form", "L1 norm of the Ledoux kernel is 2|t - tau|^s / Gamma(1+s)", ell_closed),
        check!(6, "c06-fourier-oracle", "fractional Laplacian of a gaussian against its Fourier multiplier", fourier),
        check!(7, "c07-inversion", "Riesz potential inverts the fractional power", inversion),
        check!(7, "c07-additivity", "fractional powers compose additively", additivity),
        check!(8, "c08-ledoux", "||P_t f - P_tau f||_p bounded by the fractional power", ledoux),
        check!(8, "c08-sigma-monotone", "||(-A)^s P_sigma f||_p non-increasing in sigma", ledoux_monotone),
        check!(9, "c09-heat-content-routes", "importance-sampled and direct deficit agree", heat_routes),
        check!(9, "c09-heat-content-asymptote", "interval deficit ~ 4 sqrt(t/pi) as t -> 0", heat_asymptote),
        check!(10, "c10-perbelow-margin", "deficit above |E| - b_N exp(-t trB/4) |E|^2 / V(t/2)", perbelow),
        check!(10, "c10-a-const-quadrature", "integral of p^2 equals a_N exp(-t trB) / V(t)", a_quadrature),
        check!(11, "c11-iso-kolmogorov-dilates", "per / |E|^((D-2s)/D) constant under adapted dilation", iso_kolmogorov),
        check!(11, "c11-iso-laplace-intervals", "per / L^(1-2s) constant across interval lengths", iso_laplace),
        check!(12, "c12-minimizer", "closed-form minimizer of H(t) equals the numeric one", minimizer),
        check!(12, "c12-perboth-kolmogorov-ball", "|E| <= min H(t) for the kolmogorov unit ball", perboth),
        check!(12, "c12-three-branches", "two-regime argument reaches all three cases", branches),
        check!(13, "c13-coarea-laplace", "Besov seminorm equals the integrated level-set perimeter (1D bump)", coarea_laplace),
        check!(13, "c13-coarea-kolmogorov", "Besov seminorm equals the integrated level-set perimeter (anisotropic bump)", coarea_kolmogorov),
        check!(13, "c13-sobolev", "strong Sobolev embedding with the empirical isoperimetric constant", sobolev),
        check!(13, "c13-indicator-besov", "Besov seminorm of 1_E is Gamma(1-s)/s times its perimeter", indicator_besov),
        check!(14, "c14-upper-bound", "perimeter below the deficit-based upper bound, s = 0.4 and 0.45", upper_bound),
        check!(15, "c15-determinism", "identical seed and workers give identical CSV bytes", determinism),
    ]
}

fn max_of(it: impl IntoIterator<Item = f64>) -> f64 {
    it.into_iter().fold(0.0, f64::max)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

// ---- operator model ----

fn covariance_golden(_: &Ctx) -> Result<Outcome> {
    let k = covariance(&catalog("kolmogorov", 1)?, 1.0)?.k;
    let want = [[1.0, 0.5], [0.5, 1.0 / 3.0]];
    let err = max_of((0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| (k.get(i, j) - want[i][j]).abs()));
    Ok(Outcome::at_most(err, 1e-10))
}

const VOLUME_TIMES: [f64; 3] = [0.1, 1.0, 10.0];

fn volume_laplace(_: &Ctx) -> Result<Outcome> {
    let mut err: f64 = 0.0;
    for n in 1..=4 {
        let spec = catalog("laplace", n)?;
        for t in VOLUME_TIMES {
            err = err.max(rel(covariance(&spec, t)?.volume, omega(n) * t.powf(n as f64 / 2.0)));
        }
    }
    Ok(Outcome::at_most(err, 1e-12))
}

fn volume_kolmogorov(_: &Ctx) -> Result<Outcome> {
    let spec = catalog("kolmogorov", 1)?;
    let mut err: f64 = 0.0;
    for t in VOLUME_TIMES {
        err = err.max(rel(covariance(&spec, t)?.det_tk, t.powi(4) / 12.0));
    }
    Ok(Outcome::at_most(err, 1e-10))
}

fn volume_kramers(_: &Ctx) -> Result<Outcome> {
    let spec = catalog("kramers", 0)?;
    let mut err: f64 = 0.0;
    for t in VOLUME_TIMES {
        let want = PI * (t * t / 4.0 + ((2.0 * t).cos() - 1.0) / 8.0).sqrt();
        err = err.max(rel(covariance(&spec, t)?.volume, want));
    }
    Ok(Outcome::at_most(err, 1e-8))
}

const MASS_SPECS: [&str; 4] = ["laplace:2", "kolmogorov:1", "kramers", "ornstein_uhlenbeck:2"];
const MASS_POINT: [f64; 4] = [0.3, -0.2, 0.1, 0.4];
/// Proposal covariance is PROPOSAL_INFLATE² times the kernel's, so the weights stay bounded.
const PROPOSAL_INFLATE: f64 = 1.2;

/// Gaussian density of Lz with LLᵀ = λ²·2tK, evaluated at the offset whose kernel
/// quadratic form is `quad`.
fn proposal_density(cb: &CovarianceBundle, n: usize, quad: f64) -> f64 {
    let l2 = PROPOSAL_INFLATE * PROPOSAL_INFLATE;
    let det = l2.powi(n as i32) * 2f64.powi(n as i32) * cb.det_tk;
    (2.0 * PI).powf(-(n as f64) / 2.0) / det.sqrt() * (-quad / (4.0 * l2)).exp()
}

/// Importance-sampled kernel mass: forward ∫p(X,Y,t)dY or adjoint ∫p(Y,X,t)dY.
fn kernel_mass(spec: &OperatorSpec, t: f64, adjoint: bool, scale: f64, cfg: &McConfig) -> Result<kfp_core::mc::MCEstimate> {
    let n = spec.dim;
    let cb = covariance(spec, t)?;
    let law = AdjointLaw::new(spec, &cb)?;
    let x = &MASS_POINT[..n];
    let mean = cb.mean(x);
    let acc = run_blocks(cfg, |rng, count, acc| {
        let mut z = [0.0; 16];
        let mut y = vec![0.0; n];
        let mut xi = vec![0.0; n];
        for _ in 0..count {
            kfp_core::mc::fill_normal(rng, &mut z[..n]);
            z[..n].iter_mut().for_each(|v| *v *= PROPOSAL_INFLATE);
            cb.factor.mul_vec_into(&z[..n], &mut xi);
            let w = if adjoint {
                // X' = e^{-tB}(x - ξ); density of X' is q(ξ)·e^{t trB}.
                let d: Vec<f64> = x.iter().zip(&xi).map(|(a, b)| a - b).collect();
                law.exp_neg.mul_vec_into(&d, &mut y);
                let p = scale * density_with(&cb, n, &y, x);
                p / (proposal_density(&cb, n, cb.quad_form(&y, x)) / law.mass)
            } else {
                for i in 0..n {
                    y[i] = mean[i] + xi[i];
                }
                let p = scale * density_with(&cb, n, x, &y);
                p / proposal_density(&cb, n, cb.quad_form(x, &y))
            };
            acc.push(w);
        }
    });
    Ok(acc.estimate(cfg.seed))
}

fn mass_z(ctx: &Ctx, specs: &[&str], adjoint: bool, tag: u64) -> Result<(f64, String)> {
    let mut worst: f64 = 0.0;
    let mut note = String::new();
    for (k, name) in specs.iter().enumerate() {
        let spec = catalog_from_str(name)?;
        for (j, t) in [0.1, 1.0].into_iter().enumerate() {
            let cfg = ctx.mc(20_000, 100_000, tag + 10 * k as u64 + j as u64);
            let e = kernel_mass(&spec, t, adjoint, ctx.kernel_scale, &cfg)?;
            let want = if adjoint { (-t * spec.trace_b()).exp() } else { 1.0 };
            let z = (e.value - want).abs() / e.std_error.max(f64::MIN_POSITIVE);
            if z > worst {
                worst = z;
                note = format!("{name} t={t}: {:.6} vs {want:.6}", e.value);
            }
        }
    }
    Ok((worst, note))
}

fn mass_forward(ctx: &Ctx) -> Result<Outcome> {
    let (z, note) = mass_z(ctx, &MASS_SPECS, false, 300)?;
    Ok(Outcome::at_most(z, 3.0).note(note))
}

fn mass_adjoint(ctx: &Ctx) -> Result<Outcome> {
    let (z, note) = mass_z(ctx, &MASS_SPECS, true, 400)?;
    Ok(Outcome::at_most(z, 3.0).note(note))
}

fn mass_ou(ctx: &Ctx) -> Result<Outcome> {
    let spec = catalog("ornstein_uhlenbeck", 2)?;
    let mut worst: f64 = 0.0;
    for (j, t) in [0.1, 1.0].into_iter().enumerate() {
        let e = kernel_mass(&spec, t, true, ctx.kernel_scale, &ctx.mc(20_000, 100_000, 500 + j as u64))?;
        let want = (2.0 * t).exp();
        worst = worst.max((e.value - want).abs() / e.std_error.max(f64::MIN_POSITIVE));
    }
    Ok(Outcome::at_most(worst, 3.0))
}

fn intrinsic(_: &Ctx) -> Result<Outcome> {
    let mut err: f64 = 0.0;
    let mut note = vec![];
    for (name, d0, dinf) in [("laplace:2", 2.0, 2.0), ("kolmogorov:1", 4.0, 4.0), ("kramers", 4.0, 2.0)] {
        let r = intrinsic_dimensions(&catalog_from_str(name)?)?;
        err = err.max((r.d0 - d0).abs()).max((r.dinf - dinf).abs());
        note.push(format!("{name} ({:.3}, {:.3})", r.d0, r.dinf));
    }
    Ok(Outcome::at_most(err, 0.1).note(note.join(" ")))
}

// ---- fractional calculus ----

fn ell_closed(ctx: &Ctx) -> Result<Outcome> {
    let mut rng = kfp_core::mc::stream(ctx.seed, 0x5E11);
    let mut err: f64 = 0.0;
    for _ in 0..100 {
        let t = 10f64.powf(rng.random_range(-3.0..1.0));
        let tau = 10f64.powf(rng.random_range(-3.0..1.0));
        let s = rng.random_range(0.05..0.95);
        let closed = ell_l1_closed(t, tau, s);
        err = err.max((ell_l1(t, tau, s) - closed).abs() / closed.max(1e-300));
    }
    Ok(Outcome::at_most(err, 1e-8))
}

/// (-Δ)^s e^{-x²/2} in one dimension through its multiplier |ξ|^{2s}.
pub fn fourier_oracle(s: f64, x: f64) -> f64 {
    let g = |xi: f64| xi.powf(2.0 * s) * (-xi * xi / 2.0).exp() * (x * xi).cos();
    2.0 / (2.0 * PI).sqrt() * integrate_to_infinity(g, 0.0, 1e-13, 1e-12).value
}

/// Points before the first sign change of all three targets, where a relative
/// tolerance is meaningful.
const FOURIER_POINTS: [f64; 5] = [0.0, 0.2, 0.4, 0.6, 0.8];

fn fourier(ctx: &Ctx) -> Result<Outcome> {
    let spec = catalog("laplace", 1)?;
    let f = ScalarField::standard_gaussian(1);
    let mut err: f64 = 0.0;
    let mut note = String::new();
    // Sample counts grow with s so that the tolerance stays near four standard errors.
    for (i, (s, n)) in [(0.25, 20_000), (0.5, 40_000), (0.75, 120_000)].into_iter().enumerate() {
        let q = FracQuadSpec { near_decades: 6, panels_per_decade: 2, ..FracQuadSpec::new(s) };
        for (j, x) in FOURIER_POINTS.into_iter().enumerate() {
            let cfg = ctx.mc(n, 2 * n, 600 + 10 * i as u64 + j as u64);
            let got = balakrishnan_apply(&spec, &f, &[x], &q, &cfg)?;
            let want = fourier_oracle(s, x);
            let e = rel(got.value, want);
            if e > err {
                err = e;
                note = format!("s={s} x={x}: {:.6} vs {want:.6}", got.value);
            }
        }
    }
    Ok(Outcome::at_most(err, 1e-2).note(note))
}

fn composite_cases() -> Result<Vec<(OperatorSpec, ScalarField, Vec<f64>)>> {
    Ok(vec![
        (catalog("laplace", 1)?, ScalarField::standard_gaussian(1), vec![0.3]),
        (
            catalog("kolmogorov", 1)?,
            ScalarField::gaussian(vec![0.2, -0.1], SquareMatrix::diag(&[0.5, 0.8]), 1.0)?,
            vec![0.1, 0.2],
        ),
    ])
}

fn inversion(ctx: &Ctx) -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut budget: f64 = 0.0;
    for (k, (spec, f, x)) in composite_cases()?.into_iter().enumerate() {
        let r = inversion_residual(&spec, &f, &x, 0.3, &ctx.mc(4_000, 20_000, 700 + k as u64))?;
        worst = worst.max(r.residual).max(r.residual_reverse);
        budget = budget.max(r.budget);
    }
    Ok(Outcome::at_most(worst, 2e-2).note(format!("largest budget {budget:.2e}")))
}

fn additivity(ctx: &Ctx) -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut budget: f64 = 0.0;
    for (k, (spec, f, x)) in composite_cases()?.into_iter().enumerate() {
        let r = additivity_residual(&spec, &f, &x, 0.2, 0.3, &ctx.mc(4_000, 20_000, 710 + k as u64))?;
        worst = worst.max(r.residual).max(r.residual_reverse);
        budget = budget.max(r.budget);
    }
    Ok(Outcome::at_most(worst, 5e-2).note(format!("largest budget {budget:.2e}")))
}

fn ledoux_runs(ctx: &Ctx) -> Result<Vec<kfp_core::fractional::LedouxReport>> {
    let spec = catalog("kolmogorov", 1)?;
    let f1 = ScalarField::gaussian(vec![0.2, -0.1], SquareMatrix::diag(&[0.5, 0.8]), 1.0)?;
    let f2 = ScalarField::gaussian(vec![0.0, 0.5], SquareMatrix::diag(&[1.0, 0.3]), 2.0)?;
    let f3 = ScalarField::gaussian(vec![-0.3, 0.2], SquareMatrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 0.5]])?, 0.7)?;
    let combos = [
        (&f1, 0.3, 0.5, 0.2),
        (&f1, 0.6, 1.0, 0.1),
        (&f2, 0.5, 0.05, 0.01),
        (&f2, 0.25, 2.0, 0.5),
        (&f1, 0.75, 0.3, 0.29),
        (&f2, 0.4, 0.8, 0.4),
        (&f1, 0.15, 3.0, 1.0),
        (&f3, 0.5, 0.2, 0.1),
        (&f3, 0.9, 1.5, 0.5),
        (&f3, 0.35, 0.02, 0.3),
    ];
    let mut out = vec![];
    for (k, (f, s, t, tau)) in combos.into_iter().enumerate() {
        for p in [1u32, 2] {
            out.push(ledoux_check(&spec, f, s, t, tau, p, &ctx.mc(5_000, 20_000, 800 + 2 * k as u64 + p as u64))?);
        }
    }
    Ok(out)
}

fn ledoux(ctx: &Ctx) -> Result<Outcome> {
    let runs = ledoux_runs(ctx)?;
    let worst = max_of(runs.iter().map(|r| r.ratio));
    let ok = runs.iter().all(|r| r.ok);
    // The criterion allows lhs up to rhs·(1 + 5·relerr), which `ok` encodes.
    let pass = Outcome { pass: true, ..Outcome::at_most(worst, 1.0) };
    Ok(pass.and(ok, "lhs above rhs beyond error").note(format!("{} runs, largest ratio shown", runs.len())))
}

fn ledoux_monotone(ctx: &Ctx) -> Result<Outcome> {
    let runs = ledoux_runs(&Ctx { samples: Some(ctx.n(2_000, 10_000)), ..*ctx })?;
    let bad = runs.iter().filter(|r| !r.monotone).count();
    Ok(Outcome::at_most(bad as f64, 0.0))
}

// ---- perimeter lab ----

fn unit_interval() -> Result<Region> {
    Region::boxed(vec![0.0], vec![1.0])
}

fn heat_routes(ctx: &Ctx) -> Result<Outcome> {
    let cases = [(catalog("laplace", 1)?, unit_interval()?), (catalog("kolmogorov", 1)?, Region::ball(vec![0.0, 0.0], 1.0)?)];
    let mut worst: f64 = 0.0;
    for (k, (spec, e)) in cases.iter().enumerate() {
        for (j, t) in [0.01, 0.1, 1.0].into_iter().enumerate() {
            let tag = 900 + 10 * k as u64 + j as u64;
            let a = heat_content_deficit(spec, e, t, &ctx.mc(20_000, 100_000, tag))?;
            let b = heat_content_deficit_direct(spec, e, t, &ctx.mc(20_000, 100_000, tag + 100))?;
            worst = worst.max(a.z_score(&b));
        }
    }
    Ok(Outcome::at_most(worst, 4.0))
}

fn heat_asymptote(ctx: &Ctx) -> Result<Outcome> {
    let spec = catalog("laplace", 1)?;
    let e = unit_interval()?;
    let mut err: f64 = 0.0;
    for (j, t) in [1e-4, 1e-3].into_iter().enumerate() {
        let d = heat_content_deficit(&spec, &e, t, &ctx.mc(100_000, 400_000, 950 + j as u64))?;
        err = err.max(rel(d.value, 4.0 * (t / PI).sqrt()));
    }
    Ok(Outcome::at_most(err, 0.05))
}

fn perbelow(ctx: &Ctx) -> Result<Outcome> {
    let mut worst = f64::INFINITY;
    let mut cases = 0;
    for (k, name) in ["laplace:2", "kolmogorov:1", "kramers"].into_iter().enumerate() {
        let spec = catalog_from_str(name)?;
        if !spec.trace_flag() {
            continue;
        }
        let regions = [Region::ball(vec![0.0; 2], 1.0)?, Region::boxed(vec![-1.0; 2], vec![1.0; 2])?];
        for (r, e) in regions.iter().enumerate() {
            for (j, t) in [0.1, 0.5, 2.0].into_iter().enumerate() {
                let g = perbelow_gap(&spec, e, t, &ctx.mc(10_000, 50_000, 1000 + 100 * k as u64 + 10 * r as u64 + j as u64))?;
                worst = worst.min(g.margin / g.lhs.std_error.max(1e-300));
                cases += 1;
            }
        }
    }
    Ok(Outcome::at_least(worst.min(1e6), -4.0).note(format!("{cases} cases, margin in standard errors")))
}

fn a_quadrature(_: &Ctx) -> Result<Outcome> {
    let mut err: f64 = 0.0;
    for name in MASS_SPECS {
        let spec = catalog_from_str(name)?;
        for t in [0.5, 1.0] {
            let y = &MASS_POINT[..spec.dim];
            let q = kernel_square_integral(&spec, y, t, 48)?;
            let want = a_const(spec.dim) * (-t * spec.trace_b()).exp() / covariance(&spec, t)?.volume;
            err = err.max(rel(q, want));
        }
    }
    Ok(Outcome::at_most(err, 1e-6))
}

fn sweep_quad(s: f64) -> FracQuadSpec {
    FracQuadSpec { panels_per_decade: 2, ..FracQuadSpec::new(s) }
}

fn iso_kolmogorov(ctx: &Ctx) -> Result<Outcome> {
    let spec = catalog("kolmogorov", 1)?;
    let base = Region::ball(vec![0.0, 0.0], 1.0)?;
    let family = [0.5, 1.0, 2.0]
        .iter()
        .map(|&l: &f64| base.scaled(&[l, l.powi(3)]))
        .collect::<Result<Vec<_>>>()?;
    let r = iso_ratio_sweep(&spec, &family, &sweep_quad(0.25), &ctx.mc(8_000, 40_000, 1100))?;
    Ok(Outcome::at_most(r.max_z, 4.0).and(r.min_ratio > 0.0, "non-positive ratio").note(format!("min ratio {:.4}", r.min_ratio)))
}

fn iso_laplace(ctx: &Ctx) -> Result<Outcome> {
    let spec = catalog("laplace", 1)?;
    let family = [0.5, 1.0, 2.0].iter().map(|&l| Region::boxed(vec![0.0], vec![l])).collect::<Result<Vec<_>>>()?;
    let r = iso_ratio_sweep(&spec, &family, &sweep_quad(0.25), &ctx.mc(8_000, 40_000, 1200))?;
    Ok(Outcome::at_most(r.max_z, 4.0).and(r.min_ratio > 0.0, "non-positive ratio").note(format!("min ratio {:.4}", r.min_ratio)))
}

fn minimizer(ctx: &Ctx) -> Result<Outcome> {
    let mut rng = kfp_core::mc::stream(ctx.seed, 0x3117);
    let mut err: f64 = 0.0;
    let mut lu = |lo: f64, hi: f64| 10f64.powf(rng.random_range(lo..hi));
    for _ in 0..50 {
        let h = Interpolant {
            c1: lu(-1.0, 1.0),
            c2: lu(-1.0, 1.0),
            dim: lu(0.0, 1.0),
            s: lu(-1.3, -0.03),
            measure: lu(-3.0, 3.0),
            per: lu(-2.0, 2.0),
        };
        err = err.max(rel(h.argmin_numeric(), h.argmin()));
    }
    Ok(Outcome::at_most(err, 1e-6))
}

fn perboth(ctx: &Ctx) -> Result<Outcome> {
    let spec = catalog("kolmogorov", 1)?;
    let e = Region::ball(vec![0.0, 0.0], 1.0)?;
    let s = 0.25;
    let p = frac_perimeter(&spec, &e, &sweep_quad(s), &ctx.mc(8_000, 40_000, 1300))?;
    // The bound is monotone in per, so a lower confidence value keeps it honest.
    let per_low = p.value - 4.0 * p.total_error();
    let r = interpolation_bound(&spec, e.measure(), s, per_low)?;
    Ok(Outcome::at_least(r.h_value / e.measure(), 1.0)
        .and(r.bound_holds, "bound fails")
        .note(format!("per {:.4}, t* {:.4}", p.value, r.t_star)))
}

fn branches(_: &Ctx) -> Result<Outcome> {
    let s = 0.25;
    let two = TwoRegime { d0: 4.0, dinf: 2.0, s, c1: 2.0 / gamma(1.0 + s), c2: 1.0 };
    let c = two.c();
    let pers = [2.0 * c * two.d0, c * (two.d0 * two.dinf).sqrt(), c * two.dinf / 2.0];
    let mut seen = vec![];
    let mut consistent = true;
    for per in pers {
        let o = two.evaluate(1.0, per)?;
        consistent &= match o.case {
            RegimeCase::Small => o.time <= 1.0,
            RegimeCase::Large => o.time >= 1.0,
            RegimeCase::Middle => o.time == 1.0,
        };
        if !seen.contains(&o.case) {
            seen.push(o.case);
        }
    }
    let labels: Vec<&str> = seen.iter().map(|c| c.label()).collect();
    Ok(Outcome::at_least(seen.len() as f64, 3.0).and(consistent, "time outside its case range").note(labels.join(" ")))
}

// ---- besov embedding ----

fn coarea_quad() -> FracQuadSpec {
    FracQuadSpec { near_decades: 8, panels_per_decade: 2, ..FracQuadSpec::new(0.25) }
}

fn coarea_laplace(ctx: &Ctx) -> Result<Outcome> {
    let spec = catalog("laplace", 1)?;
    let prof = LevelSetProfile::new(ScalarField::bump(vec![0.0], SquareMatrix::identity(1), 1.0, 3)?)?;
    let r = coarea_residual(&spec, &prof, 0.25, 24, &coarea_quad(), &ctx.mc(4_000, 8_000, 1400))?;
    Ok(Outcome::at_most(r.residual, 0.05).note(format!("{:.4} vs {:.4}", r.lhs.value, r.rhs)))
}

fn coarea_kolmogorov(ctx: &Ctx) -> Result<Outcome> {
    let spec = catalog("kolmogorov", 1)?;
    let prof = LevelSetProfile::new(ScalarField::bump(vec![0.0, 0.0], SquareMatrix::diag(&[1.0, 0.3]), 1.0, 3)?)?;
    let r = coarea_residual(&spec, &prof, 0.25, 24, &coarea_quad(), &ctx.mc(4_000, 8_000, 1500))?;
    Ok(Outcome::at_most(r.residual, 0.10).note(format!("{:.4} vs {:.4}", r.lhs.value, r.rhs)))
}

fn sobolev(ctx: &Ctx) -> Result<Outcome> {
    let cases = [
        (catalog("kolmogorov", 1)?, SquareMatrix::diag(&[1.0, 4.0])),
        (catalog("kramers", 0)?, SquareMatrix::diag(&[0.25, 0.25])),
    ];
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for (k, (spec, shape)) in cases.into_iter().enumerate() {
        let prof = LevelSetProfile::new(ScalarField::bump(vec![0.0, 0.0], shape, 1.0, 3)?)?;
        let r = sobolev_ratio(&spec, &prof, 0.25, &coarea_quad(), &ctx.mc(4_000, 16_000, 1600 + k as u64))?;
        worst = worst.max(r.lhs / r.rhs);
        ok &= r.ok;
    }
    Ok(Outcome::at_most(worst, 1.0).and(ok, "embedding fails beyond error"))
}

fn indicator_besov(ctx: &Ctx) -> Result<Outcome> {
    let spec = catalog("laplace", 1)?;
    let e = unit_interval()?;
    let s = 0.25;
    let q = coarea_quad();
    let nb = besov_seminorm(&spec, &ScalarField::indicator(e.clone()), 2.0 * s, &q, &ctx.mc(8_000, 40_000, 1700))?;
    let p = frac_perimeter(&spec, &e, &q, &ctx.mc(8_000, 40_000, 1701))?;
    let c = gamma(1.0 - s) / s;
    let z = (nb.value - c * p.value).abs() / (nb.total_error() + c * p.total_error());
    Ok(Outcome::at_most(z, 4.0).note(format!("{:.4} vs {:.4}", nb.value, c * p.value)))
}

fn upper_bound(ctx: &Ctx) -> Result<Outcome> {
    let spec = catalog("laplace", 1)?;
    let e = unit_interval()?;
    let mut worst: f64 = 0.0;
    let mut ok = true;
    let mut note = vec![];
    for (k, s) in [0.4, 0.45].into_iter().enumerate() {
        let q = FracQuadSpec { near_decades: 12, ..FracQuadSpec::new(s) };
        let r = bbm_upper_bound(&spec, &e, &q, &ctx.mc(20_000, 100_000, 1800 + k as u64))?;
        worst = worst.max(r.lhs / r.rhs);
        ok &= r.ok;
        note.push(format!("s={s}: {:.4} <= {:.4}", r.lhs, r.rhs));
    }
    Ok(Outcome::at_most(worst, 1.0).and(ok, "bound fails beyond error").note(note.join("; ")))
}

// ---- cli ----

fn determinism(ctx: &Ctx) -> Result<Outcome> {
    let seed = ctx.seed.to_string();
    let workers = ctx.workers.to_string();
    let argv = [
        "kfp", "sweep", "iso", "--catalog", "laplace:1", "--region", "box:1", "--s", "0.25", "--samples", "4000",
        "--seed", &seed, "--workers", &workers, "--format", "csv",
    ];
    let render = || -> std::result::Result<Vec<u8>, String> {
        let cli = <crate::args::Cli as clap::Parser>::try_parse_from(argv).map_err(|e| e.to_string())?;
        let art = crate::commands::produce(&cli).map_err(|e| e.to_string())?;
        crate::emit::render(&art, crate::args::Format::Csv, &crate::commands::resolved_config(&cli)).map_err(|e| e.to_string())
    };
    match (render(), render()) {
        (Ok(a), Ok(b)) => Ok(Outcome::at_most(if a == b { 0.0 } else { 1.0 }, 0.0).note(format!("{} bytes", a.len()))),
        (Err(e), _) | (_, Err(e)) => Ok(Outcome::at_most(1.0, 0.0).note(format!("command failed: {e}"))),
    }
}
