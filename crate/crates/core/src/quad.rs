//! Deterministic quadrature: Gauss-Legendre, adaptive Gauss-Kronrod, adaptive Simpson,
//! golden-section search.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One 15-point Kronrod panel on [a, b]: nodes with Kronrod and embedded Gauss weights.
#[derive(Debug, Clone)]
pub struct KronrodPanel {
    pub nodes: [f64; 15],
    pub wk: [f64; 15],
    pub wg: [f64; 15],
}

impl KronrodPanel {
    pub fn new(a: f64, b: f64) -> Self {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let mut nodes = [0.0; 15];
        let mut wk = [0.0; 15];
        let mut wg = [0.0; 15];
        for i in 0..7 {
            nodes[2 * i] = c - h * XGK[i];
            nodes[2 * i + 1] = c + h * XGK[i];
            wk[2 * i] = h * WGK[i];
            wk[2 * i + 1] = h * WGK[i];
            if i % 2 == 1 {
                wg[2 * i] = h * WG[i / 2];
                wg[2 * i + 1] = h * WG[i / 2];
            }
        }
        nodes[14] = c;
        wk[14] = h * WGK[7];
        wg[14] = h * WG[3];
        Self { nodes, wk, wg }
    }

    /// (Kronrod value, Gauss value) for given node values.
    pub fn apply(&self, values: &[f64]) -> (f64, f64) {
        let k = values.iter().zip(&self.wk).map(|(v, w)| v * w).sum();
        let g = values.iter().zip(&self.wg).map(|(v, w)| v * w).sum();
        (k, g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Segment {
    fn cmp(&self, o: &Self) -> Ordering {
        self.error.total_cmp(&o.error)
    }
}

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> Segment {
    let panel = KronrodPanel::new(a, b);
    let vals: Vec<f64> = panel.nodes.iter().map(|&x| f(x)).collect();
    let (k, g) = panel.apply(&vals);
    Segment { a, b, value: k, error: (k - g).abs() }
}

/// Adaptive Gauss-Kronrod (7-15) on a finite interval.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> QuadResult {
    integrate_limit(f, a, b, abs_tol, rel_tol, 2000)
}

pub fn integrate_limit(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_segments: usize,
) -> QuadResult {
    if a == b {
        return QuadResult { value: 0.0, error: 0.0 };
    }
    let mut heap = BinaryHeap::new();
    let first = gk15(&f, a, b);
    let mut total = first.value;
    let mut err = first.error;
    heap.push(first);
    while err > abs_tol.max(rel_tol * total.abs()) && heap.len() < max_segments {
        let seg = heap.pop().expect("heap is nonempty");
        let m = 0.5 * (seg.a + seg.b);
        if m <= seg.a || m >= seg.b {
            heap.push(seg);
            break;
        }
        let l = gk15(&f, seg.a, m);
        let r = gk15(&f, m, seg.b);
        total += l.value + r.value - seg.value;
        err += l.error + r.error - seg.error;
        heap.push(l);
        heap.push(r);
    }
    // Re-sum to shed the drift of incremental updates.
    let value = heap.iter().map(|s| s.value).sum();
    let error = heap.iter().map(|s| s.error).sum();
    QuadResult { value, error }
}

/// Integral over [a, ∞) through x = a + (1-u)/u.
pub fn integrate_to_infinity(f: impl Fn(f64) -> f64, a: f64, abs_tol: f64, rel_tol: f64) -> QuadResult {
    let g = |u: f64| {
        if u <= 0.0 {
            return 0.0;
        }
        let x = a + (1.0 - u) / u;
        let v = f(x) / (u * u);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(g, 0.0, 1.0, abs_tol, rel_tol)
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Adaptive Simpson for a vector-valued integrand, tolerance relative to the
/// componentwise magnitude of the running estimate.
pub fn simpson_vec(f: &impl Fn(f64) -> Vec<f64>, a: f64, b: f64, rel_tol: f64) -> Vec<f64> {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson_rule(a, b, &fa, &fm, &fb);
    let scale: Vec<f64> = whole.iter().map(|v| v.abs()).collect();
    simpson_rec(f, a, b, &fa, &fm, &fb, &whole, rel_tol, &scale, 50)
}

fn simpson_rule(a: f64, b: f64, fa: &[f64], fm: &[f64], fb: &[f64]) -> Vec<f64> {
    let h = (b - a) / 6.0;
    fa.iter().zip(fm).zip(fb).map(|((x, y), z)| h * (x + 4.0 * y + z)).collect()
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    f: &impl Fn(f64) -> Vec<f64>,
    a: f64,
    b: f64,
    fa: &[f64],
    fm: &[f64],
    fb: &[f64],
    whole: &[f64],
    rel_tol: f64,
    scale: &[f64],
    depth: u32,
) -> Vec<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson_rule(a, m, fa, &flm, fm);
    let right = simpson_rule(m, b, fm, &frm, fb);
    let done = depth == 0
        || left.iter().zip(&right).zip(whole).zip(scale).all(|(((l, r), w), s)| {
            (l + r - w).abs() <= 15.0 * rel_tol * s.max(f64::MIN_POSITIVE)
        });
    if done {
        return left
            .iter()
            .zip(&right)
            .zip(whole)
            .map(|((l, r), w)| l + r + (l + r - w) / 15.0)
            .collect();
    }
    let l = simpson_rec(f, a, m, fa, &flm, fm, &left, rel_tol, scale, depth - 1);
    let r = simpson_rec(f, m, b, fm, &frm, fb, &right, rel_tol, scale, depth - 1);
    l.iter().zip(&r).map(|(x, y)| x + y).collect()
}

/// Golden-section minimization of a unimodal function on [a, b].
pub fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, rel_tol: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..500 {
        if (b - a).abs() <= rel_tol * (a.abs() + b.abs()) * 0.5 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Kronrod panels covering [ln lo, ln hi] in log-time, `per_decade` panels per decade.
pub fn log_panels(lo: f64, hi: f64, per_decade: usize) -> Vec<KronrodPanel> {
    let (ul, uh) = (lo.ln(), hi.ln());
    let decades = (hi / lo).log10();
    let count = ((decades * per_decade as f64).ceil() as usize).max(1);
    let h = (uh - ul) / count as f64;
    (0..count).map(|i| KronrodPanel::new(ul + i as f64 * h, ul + (i + 1) as f64 * h)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(10);
        let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert!((v - 2.0 / 19.0).abs() < 1e-14);
    }

    #[test]
    fn kronrod_handles_sqrt_singularity() {
        let r = integrate(|x| 1.0 / x.sqrt(), 0.0, 1.0, 1e-12, 1e-12);
        assert!((r.value - 2.0).abs() < 1e-9, "{r:?}");
    }

    #[test]
    fn infinite_range() {
        let r = integrate_to_infinity(|x| (-x).exp(), 0.0, 1e-13, 1e-13);
        assert!((r.value - 1.0).abs() < 1e-11);
    }

    #[test]
    fn simpson_vector() {
        let v = simpson_vec(&|x| vec![x.exp(), x * x], 0.0, 1.0, 1e-10);
        assert!((v[0] - (1f64.exp() - 1.0)).abs() < 1e-10);
        assert!((v[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn golden_parabola() {
        let m = golden_section(|x| (x - 1.3).powi(2), 0.0, 5.0, 1e-12);
        assert!((m - 1.3).abs() < 1e-7);
    }
}
