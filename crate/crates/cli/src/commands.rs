use crate::args::{
    BesovAction, Cli, Command, Dilation, FracAction, KernelAction, OperatorAction, OperatorArg, QuadArgs,
    SemigroupAction, Suite, SweepAction,
};
use crate::emit::{num, Artifact, Table};
use crate::error::{CliError, CliResult};
use crate::verify::{self, Ctx};
use kfp_core::besov::{besov_seminorm, coarea_residual, sobolev_ratio, LevelSetProfile};
use kfp_core::field::ScalarField;
use kfp_core::fractional::{balakrishnan_apply, inversion_residual, riesz_apply, FracQuadSpec};
use kfp_core::matlin::SquareMatrix;
use kfp_core::mc::McConfig;
use kfp_core::operator::{
    catalog_from_str, check_hypoelliptic, covariance, default_time_grid, density_with, intrinsic_dimensions,
    kalman_rank, OperatorSpec,
};
use kfp_core::perimeter::{frac_perimeter, iso_denominator, iso_ratio_sweep};
use kfp_core::region::Region;
use kfp_core::semigroup::{apply_adjoint, apply_semigroup};
use kfp_core::KfpError;
use serde_json::{json, Value};

const DEFAULT_SAMPLES: usize = 20_000;

/// The parsed invocation as written into every output file.
pub fn resolved_config(cli: &Cli) -> Value {
    serde_json::to_value(cli).unwrap_or(Value::Null)
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    let art = produce(cli)?;
    let format = cli.format.unwrap_or(art.default_format);
    let bytes = crate::emit::render(&art, format, &resolved_config(cli))?;
    crate::emit::write(&bytes, cli.out.as_deref())?;
    match art.failures {
        0 => Ok(()),
        n => Err(CliError::VerifyFailed { failed: n }),
    }
}

/// Inline JSON, or the contents of the file it names.
fn json_text(arg: &str) -> CliResult<String> {
    let t = arg.trim_start();
    if t.starts_with('{') || t.starts_with('[') {
        Ok(arg.to_string())
    } else {
        Ok(std::fs::read_to_string(arg)?)
    }
}

pub fn operator(op: &OperatorArg) -> CliResult<OperatorSpec> {
    let spec = match (&op.catalog, &op.spec) {
        (Some(c), _) => catalog_from_str(c)?,
        (None, Some(s)) => OperatorSpec::from_json(&json_text(s)?)?,
        (None, None) => return Err(CliError::Usage("an operator is required (--catalog or --spec)".into())),
    };
    let h = check_hypoelliptic(&spec, &default_time_grid());
    if !h.hypoelliptic {
        return Err(KfpError::Precondition(format!(
            "operator {} is not hypoelliptic (min scaled eigenvalue {:e})",
            spec.label(),
            h.worst_min_eig
        ))
        .into());
    }
    Ok(spec)
}

fn parse_num(v: &str, what: &str) -> CliResult<f64> {
    v.parse::<f64>().map_err(|_| CliError::Usage(format!("bad number '{v}' in {what}")))
}

/// ball:R (centered), box:L = [0,L]^N, cube:L = [-L/2,L/2]^N, interval:L = (0,L), or JSON.
pub fn region(arg: &str, dim: usize) -> CliResult<Region> {
    let t = arg.trim();
    if !t.starts_with('{') {
        if let Some((kind, v)) = t.split_once(':') {
            let x = parse_num(v, arg)?;
            return Ok(match kind {
                "ball" => Region::ball(vec![0.0; dim], x)?,
                "box" => Region::boxed(vec![0.0; dim], vec![x; dim])?,
                "interval" if dim == 1 => Region::boxed(vec![0.0], vec![x])?,
                "cube" => Region::boxed(vec![-x / 2.0; dim], vec![x / 2.0; dim])?,
                _ => return Err(CliError::Usage(format!("unknown region '{arg}'"))),
            });
        }
    }
    let r = Region::from_json(&json_text(arg)?)?;
    if r.dim() != dim {
        return Err(KfpError::InvalidInput(format!("region has dimension {}, operator {dim}", r.dim())).into());
    }
    Ok(r)
}

/// `gaussian` (standard), `bump` (unit ball, order 3), or field JSON.
pub fn field(arg: &str, dim: usize) -> CliResult<ScalarField> {
    let f = match arg.trim() {
        "gaussian" => ScalarField::standard_gaussian(dim),
        "bump" => ScalarField::bump(vec![0.0; dim], SquareMatrix::identity(dim), 1.0, 3)?,
        other => ScalarField::from_json(&json_text(other)?)?,
    };
    if f.dim() != dim {
        return Err(KfpError::InvalidInput(format!("field has dimension {}, operator {dim}", f.dim())).into());
    }
    Ok(f)
}

fn point(x: &[f64], dim: usize, name: &str) -> CliResult<Vec<f64>> {
    match x.len() {
        0 => Ok(vec![0.0; dim]),
        n if n == dim => Ok(x.to_vec()),
        n => Err(CliError::Usage(format!("--{name} has {n} coordinates, operator dimension is {dim}"))),
    }
}

fn mc(cli: &Cli) -> McConfig {
    McConfig::new(cli.samples.unwrap_or(DEFAULT_SAMPLES), cli.seed).with_workers(cli.workers)
}

fn quad(cli: &Cli, s: f64, q: &QuadArgs) -> FracQuadSpec {
    FracQuadSpec {
        near_decades: q.near_decades,
        far_decades: q.far_decades,
        panels_per_decade: q.panels_per_decade,
        tail_tol: cli.tol.unwrap_or(1e-4),
        ..FracQuadSpec::new(s)
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

/// Homogeneous weight 2k+1 of each coordinate, k being the first power of B that
/// reaches it from the range of Q.
pub fn adapted_weights(spec: &OperatorSpec) -> Vec<f64> {
    let n = spec.dim;
    let mut w: Vec<Option<f64>> = vec![None; n];
    let mut m = spec.q.clone();
    for k in 0..n {
        for (j, slot) in w.iter_mut().enumerate() {
            if slot.is_none() && m.row(j).iter().any(|v| v.abs() > 1e-12) {
                *slot = Some((2 * k + 1) as f64);
            }
        }
        m = spec.b.matmul(&m);
    }
    w.into_iter().map(|x| x.unwrap_or(1.0)).collect()
}

const SWEEP_HEADER: [&str; 6] = ["measure", "s", "per_value", "quad_err", "mc_err", "ratio"];

pub fn produce(cli: &Cli) -> CliResult<Artifact> {
    let Some(cmd) = &cli.command else {
        return Err(CliError::Usage("no command given; see --help".into()));
    };
    match cmd {
        Command::Operator { action } => match action {
            OperatorAction::Info(op) => {
                let spec = operator(op)?;
                let d = intrinsic_dimensions(&spec)?;
                let (d0, dinf) = d.snapped();
                Ok(Artifact::json(json!({
                    "name": spec.label(),
                    "dim": spec.dim,
                    "trB": spec.trace_b(),
                    "trace_flag": spec.trace_flag(),
                    "kalman_rank": kalman_rank(&spec),
                    "D0": d0,
                    "Dinf": dinf,
                    "D0_fit": d.d0,
                    "Dinf_fit": d.dinf,
                    "regime": d.regime,
                    "homogeneous_weights": adapted_weights(&spec),
                    "warnings": d.warnings,
                })))
            }
            OperatorAction::Validate(op) => {
                let spec = operator(op)?;
                let h = check_hypoelliptic(&spec, &default_time_grid());
                Ok(Artifact::json(json!({
                    "name": spec.label(),
                    "hypoelliptic": h.hypoelliptic,
                    "worst_min_eig": h.worst_min_eig,
                    "kalman_rank": kalman_rank(&spec),
                    "trace_flag": spec.trace_flag(),
                })))
            }
        },
        Command::Kernel { action: KernelAction::Eval { op, x, y, t } } => {
            let spec = operator(op)?;
            let (x, y) = (point(x, spec.dim, "x")?, point(y, spec.dim, "y")?);
            let cb = covariance(&spec, *t)?;
            Ok(Artifact::json(json!({
                "t": t,
                "x": x,
                "y": y,
                "density": density_with(&cb, spec.dim, &x, &y),
                "volume": cb.volume,
                "pseudo_distance": (t * cb.quad_form(&x, &y)).sqrt(),
            })))
        }
        Command::Semigroup { action: SemigroupAction::Apply { op, field: fa, x, t, adjoint } } => {
            let spec = operator(op)?;
            let f = field(fa, spec.dim)?;
            let x = point(x, spec.dim, "x")?;
            let cfg = mc(cli).with_n(cli.samples.unwrap_or(100_000));
            let est = if *adjoint { apply_adjoint(&spec, &f, &x, *t, &cfg)? } else { apply_semigroup(&spec, &f, &x, *t, &cfg)? };
            let exact = if *adjoint { None } else { f.evolve(&spec, *t).ok().map(|g| g.eval(&x)) };
            Ok(Artifact::json(json!({ "estimate": est, "closed_form": exact })))
        }
        Command::Frac { action } => match action {
            FracAction::Apply { op, field: fa, x, s, riesz, quad: qa } => {
                let spec = operator(op)?;
                let f = field(fa, spec.dim)?;
                let x = point(x, spec.dim, "x")?;
                let q = quad(cli, *s, qa);
                let r = match riesz {
                    Some(alpha) => riesz_apply(&spec, &f, &x, *alpha, &q, &mc(cli))?,
                    None => balakrishnan_apply(&spec, &f, &x, &q, &mc(cli))?,
                };
                Ok(Artifact::json(to_json(&r)))
            }
            FracAction::Invert { op, field: fa, x, s } => {
                let spec = operator(op)?;
                let f = field(fa, spec.dim)?;
                let x = point(x, spec.dim, "x")?;
                Ok(Artifact::json(to_json(&inversion_residual(&spec, &f, &x, *s, &mc(cli))?)))
            }
        },
        Command::Perimeter(p) => {
            let spec = operator(&p.op)?;
            let e = region(&p.region, spec.dim)?;
            let est = frac_perimeter(&spec, &e, &quad(cli, p.s, &p.quad), &mc(cli))?;
            let (d0, dinf) = intrinsic_dimensions(&spec)?.snapped();
            let ratio = est.value / iso_denominator(e.measure(), d0, dinf, p.s);
            let mut t = Table::new(&SWEEP_HEADER);
            t.push(vec![num(e.measure()), num(p.s), num(est.value), num(est.quad_error), num(est.mc_error), num(ratio)]);
            let mut result = to_json(&est);
            result["measure"] = json!(e.measure());
            result["ratio"] = json!(ratio);
            Ok(Artifact::tabular(result, t))
        }
        Command::Sweep { action: SweepAction::Iso { op, region: ra, s, scales, dilation, quad: qa } } => {
            let spec = operator(op)?;
            let base = region(ra, spec.dim)?;
            let w = match dilation {
                Dilation::Adapted => adapted_weights(&spec),
                Dilation::Isotropic => vec![1.0; spec.dim],
            };
            let family = scales
                .iter()
                .map(|l| base.scaled(&w.iter().map(|k| l.powf(*k)).collect::<Vec<_>>()))
                .collect::<Result<Vec<_>, _>>()?;
            let rep = iso_ratio_sweep(&spec, &family, &quad(cli, *s, qa), &mc(cli))?;
            let mut t = Table::new(&SWEEP_HEADER);
            for r in &rep.rows {
                t.push(vec![num(r.measure), num(r.s), num(r.per_value), num(r.quad_err), num(r.mc_err), num(r.ratio)]);
            }
            Ok(Artifact::tabular(to_json(&rep), t))
        }
        Command::Besov { action } => match action {
            BesovAction::Seminorm { op, field: fa, s, quad: qa } => {
                let spec = operator(op)?;
                let f = field(fa, spec.dim)?;
                Ok(Artifact::json(to_json(&besov_seminorm(&spec, &f, 2.0 * s, &quad(cli, *s, qa), &mc(cli))?)))
            }
            BesovAction::Coarea { op, field: fa, s, levels, quad: qa } => {
                let spec = operator(op)?;
                let prof = LevelSetProfile::new(field(fa, spec.dim)?)?;
                let rep = coarea_residual(&spec, &prof, *s, *levels, &quad(cli, *s, qa), &mc(cli))?;
                let mut t = Table::new(&["sigma", "measure", "per_value"]);
                for l in &rep.levels {
                    t.push(vec![num(l.sigma), num(l.measure), num(l.per_value)]);
                }
                Ok(Artifact::tabular(to_json(&rep), t))
            }
            BesovAction::Sobolev { op, field: fa, s, quad: qa } => {
                let spec = operator(op)?;
                let prof = LevelSetProfile::new(field(fa, spec.dim)?)?;
                Ok(Artifact::json(to_json(&sobolev_ratio(&spec, &prof, *s, &quad(cli, *s, qa), &mc(cli))?)))
            }
        },
        Command::Verify { suite, only } => {
            let ctx = Ctx {
                full: *suite == Suite::Full,
                seed: cli.seed,
                workers: cli.workers,
                samples: cli.samples,
                kernel_scale: cli.kernel_scale,
            };
            let mut t = Table::new(&["criterion", "check", "anchor", "measured", "tolerance", "pass", "note"]);
            let mut results = vec![];
            for c in verify::selected(only) {
                let clock = std::time::Instant::now();
                let r = verify::run_check(&c, &ctx);
                let secs = clock.elapsed().as_secs_f64();
                eprintln!("{:<32} {:>7.1}s {}", r.check, secs, if r.pass { "pass" } else { "FAIL" });
                t.push(vec![
                    r.criterion.to_string(),
                    r.check.clone(),
                    r.anchor.clone(),
                    num(r.measured),
                    num(r.tolerance),
                    r.pass.to_string(),
                    r.note.clone(),
                ]);
                results.push(r);
            }
            let failures = results.iter().filter(|r| !r.pass).count();
            let mut art = Artifact::tabular(json!({ "checks": results, "failed": failures }), t);
            art.failures = failures;
            Ok(art)
        }
    }
}
