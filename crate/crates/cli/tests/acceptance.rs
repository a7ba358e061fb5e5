//! Acceptance gate: every criterion at production sample counts, one line each.

use kfp_cli::verify::{registry, run_check, Ctx};
use kfp_core::mc::DEFAULT_SEED;
use std::process::Command;
use std::time::Instant;

const TITLES: [&str; 15] = [
    "covariance golden value",
    "volume laws",
    "kernel mass",
    "intrinsic dimensions",
    "Ledoux kernel closed form",
    "fractional power against Fourier oracle",
    "inversion and additivity",
    "Ledoux estimate",
    "heat-content identity and asymptote",
    "heat-content lower bound",
    "isoperimetric scaling",
    "interpolation machine",
    "coarea and embedding",
    "deficit-based upper bound",
    "determinism",
];

/// The binary itself, run twice with the same seed and workers: stdout must match
/// byte for byte, and files written with --out must have identical bodies (their
/// config headers differ only in the output path).
fn binary_repeatable() -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |out: Option<&str>| -> Result<Vec<u8>, String> {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_kfp"));
        cmd.args(["sweep", "iso", "--catalog", "kolmogorov", "--region", "ball:1", "--s", "0.25"])
            .args(["--scales", "0.5,1", "--samples", "3000", "--seed", "7", "--workers", "3"]);
        if let Some(name) = out {
            cmd.arg("--out").arg(dir.path().join(name));
        }
        let res = cmd.output().map_err(|e| e.to_string())?;
        if !res.status.success() {
            return Err(format!("kfp exited with {}", res.status));
        }
        match out {
            Some(name) => std::fs::read(dir.path().join(name)).map_err(|e| e.to_string()),
            None => Ok(res.stdout),
        }
    };
    let body = |b: &[u8]| -> Vec<u8> {
        String::from_utf8_lossy(b).lines().filter(|l| !l.starts_with('#')).flat_map(|l| format!("{l}\n").into_bytes()).collect()
    };
    let (a, b) = (run(None)?, run(None)?);
    if a != b {
        return Err("stdout differs".into());
    }
    if !a.starts_with(b"# kfp ") {
        return Err("missing config header".into());
    }
    let (fa, fb) = (run(Some("a.csv"))?, run(Some("b.csv"))?);
    if body(&fa) != body(&fb) || body(&fa) != body(&a) {
        return Err("file bodies differ".into());
    }
    Ok(())
}

fn main() {
    let ctx = Ctx::new(true, DEFAULT_SEED);
    let checks = registry();
    let mut failed = 0;
    for crit in 1..=15u8 {
        let clock = Instant::now();
        let mut lines = vec![];
        let mut ok = true;
        for c in checks.iter().filter(|c| c.criterion == crit) {
            let r = run_check(c, &ctx);
            ok &= r.pass;
            lines.push(format!(
                "    {:<32} measured {:<12.6e} tolerance {:<10.3e} {} {}",
                r.check,
                r.measured,
                r.tolerance,
                if r.pass { "pass" } else { "FAIL" },
                r.note
            ));
        }
        if crit == 15 {
            let r = binary_repeatable();
            ok &= r.is_ok();
            lines.push(format!("    binary rerun                     {}", r.err().unwrap_or_else(|| "identical".into())));
        }
        println!(
            "criterion {crit:02} {}: {} ({:.1}s)",
            TITLES[crit as usize - 1],
            if ok { "PASS" } else { "FAIL" },
            clock.elapsed().as_secs_f64()
        );
        for l in lines {
            println!("{l}");
        }
        if !ok {
            failed += 1;
        }
    }
    println!("{} of 15 criteria passed", 15 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
