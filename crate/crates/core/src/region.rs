//! Sets with exact measure and exact uniform samplers.

use crate::error::{KfpError, Result};
use crate::matlin::{psd_sqrt, sym_spectrum, SquareMatrix};
use crate::mc::{fill_normal, stream};
use crate::operator::omega;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Serialized form, e.g. `{"shape": "ball", "center": [0, 0], "radius": 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum RegionSpec {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// {x : (x-c)ᵀ A (x-c) < 1}
    Ellipsoid { center: Vec<f64>, matrix: SquareMatrix },
    Union { parts: Vec<RegionSpec> },
}

#[derive(Debug, Clone)]
enum Shape {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ellipsoid { center: Vec<f64>, matrix: SquareMatrix, inv_root: SquareMatrix, min_axis: f64 },
    Union { parts: Vec<Region> },
}

#[derive(Debug, Clone)]
pub struct Region {
    shape: Shape,
    dim: usize,
    measure: f64,
    spec: RegionSpec,
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, PartialEq)]
pub struct BBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BBox {
    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn overlaps(&self, o: &BBox) -> bool {
        self.lo.iter().zip(&self.hi).zip(o.lo.iter().zip(&o.hi)).all(|((a, b), (c, d))| a < d && c < b)
    }

    pub fn union(&self, o: &BBox) -> BBox {
        BBox {
            lo: self.lo.iter().zip(&o.lo).map(|(a, b)| a.min(*b)).collect(),
            hi: self.hi.iter().zip(&o.hi).map(|(a, b)| a.max(*b)).collect(),
        }
    }

    pub fn expand(&self, margin: &[f64]) -> BBox {
        BBox {
            lo: self.lo.iter().zip(margin).map(|(a, m)| a - m).collect(),
            hi: self.hi.iter().zip(margin).map(|(a, m)| a + m).collect(),
        }
    }

    pub fn sample(&self, rng: &mut impl Rng, out: &mut [f64]) {
        for ((o, a), b) in out.iter_mut().zip(&self.lo).zip(&self.hi) {
            *o = a + (b - a) * rng.random::<f64>();
        }
    }
}

fn check_point(v: &[f64], what: &str) -> Result<()> {
    if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
        return Err(KfpError::InvalidInput(format!("{what} must be a nonempty finite vector")));
    }
    Ok(())
}

impl Region {
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        Self::from_spec(&RegionSpec::Ball { center, radius })
    }

    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        Self::from_spec(&RegionSpec::Box { lo, hi })
    }

    pub fn ellipsoid(center: Vec<f64>, matrix: SquareMatrix) -> Result<Self> {
        Self::from_spec(&RegionSpec::Ellipsoid { center, matrix })
    }

    /// Axis-aligned ellipsoid with the given semi-axes.
    pub fn ellipsoid_axes(center: Vec<f64>, axes: &[f64]) -> Result<Self> {
        let d: Vec<f64> = axes.iter().map(|a| 1.0 / (a * a)).collect();
        Self::ellipsoid(center, SquareMatrix::diag(&d))
    }

    pub fn union(parts: Vec<Region>) -> Result<Self> {
        Self::from_spec(&RegionSpec::Union { parts: parts.iter().map(|p| p.spec.clone()).collect() })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: RegionSpec = serde_json::from_str(text).map_err(|e| KfpError::InvalidInput(e.to_string()))?;
        Self::from_spec(&spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.spec).expect("region serializes")
    }

    pub fn spec(&self) -> &RegionSpec {
        &self.spec
    }

    pub fn from_spec(spec: &RegionSpec) -> Result<Self> {
        let (shape, dim, measure) = match spec {
            RegionSpec::Ball { center, radius } => {
                check_point(center, "center")?;
                if !(*radius > 0.0) || !radius.is_finite() {
                    return Err(KfpError::InvalidInput("radius must be positive".into()));
                }
                let n = center.len();
                (Shape::Ball { center: center.clone(), radius: *radius }, n, omega(n) * radius.powi(n as i32))
            }
            RegionSpec::Box { lo, hi } => {
                check_point(lo, "lo")?;
                check_point(hi, "hi")?;
                if lo.len() != hi.len() || lo.iter().zip(hi).any(|(a, b)| !(b > a)) {
                    return Err(KfpError::InvalidInput("box needs lo < hi componentwise".into()));
                }
                let m = lo.iter().zip(hi).map(|(a, b)| b - a).product();
                (Shape::Box { lo: lo.clone(), hi: hi.clone() }, lo.len(), m)
            }
            RegionSpec::Ellipsoid { center, matrix } => {
                check_point(center, "center")?;
                if matrix.dim() != center.len() {
                    return Err(KfpError::InvalidInput("ellipsoid matrix size mismatch".into()));
                }
                let sp = sym_spectrum(matrix)?;
                if !(sp.min_eig > 0.0) {
                    return Err(KfpError::InvalidInput("ellipsoid matrix must be positive definite".into()));
                }
                let inv_root = psd_sqrt(&matrix.inverse()?)?;
                let n = center.len();
                let shape = Shape::Ellipsoid {
                    center: center.clone(),
                    matrix: matrix.clone(),
                    inv_root,
                    min_axis: 1.0 / sp.max_eig.sqrt(),
                };
                (shape, n, omega(n) / sp.det.sqrt())
            }
            RegionSpec::Union { parts } => {
                if parts.is_empty() {
                    return Err(KfpError::InvalidInput("union needs at least one part".into()));
                }
                let parts: Vec<Region> = parts.iter().map(Region::from_spec).collect::<Result<_>>()?;
                let n = parts[0].dim;
                if parts.iter().any(|p| p.dim != n) {
                    return Err(KfpError::InvalidInput("union parts differ in dimension".into()));
                }
                check_disjoint(&parts)?;
                let m = parts.iter().map(|p| p.measure).sum();
                (Shape::Union { parts }, n, m)
            }
        };
        Ok(Self { shape, dim, measure, spec: spec.clone() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn measure(&self) -> f64 {
        self.measure
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.gauge_part(x).is_some_and(|(g, _)| g < 1.0)
    }

    /// Gauge value of x for the part that could contain it (index into parts for unions).
    fn gauge_part(&self, x: &[f64]) -> Option<(f64, usize)> {
        match &self.shape {
            Shape::Union { parts } => parts
                .iter()
                .enumerate()
                .find_map(|(i, p)| p.gauge_part(x).filter(|(g, _)| *g < 1.0).map(|(g, _)| (g, i))),
            _ => Some((self.gauge(x), 0)),
        }
    }

    /// Minkowski gauge about the center (ball, box, ellipsoid).
    fn gauge(&self, x: &[f64]) -> f64 {
        match &self.shape {
            Shape::Ball { center, radius } => {
                x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt() / radius
            }
            Shape::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(a, (l, h))| ((a - 0.5 * (l + h)) / (0.5 * (h - l))).abs())
                .fold(0.0, f64::max),
            Shape::Ellipsoid { center, matrix, .. } => {
                let d: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
                let w = matrix.mul_vec(&d);
                w.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
            }
            Shape::Union { .. } => unreachable!("unions have no single gauge"),
        }
    }

    pub fn bbox(&self) -> BBox {
        match &self.shape {
            Shape::Ball { center, radius } => BBox {
                lo: center.iter().map(|c| c - radius).collect(),
                hi: center.iter().map(|c| c + radius).collect(),
            },
            Shape::Box { lo, hi } => BBox { lo: lo.clone(), hi: hi.clone() },
            Shape::Ellipsoid { center, matrix, .. } => {
                let inv = matrix.inverse().expect("validated positive definite");
                let half: Vec<f64> = (0..self.dim).map(|i| inv.get(i, i).sqrt()).collect();
                BBox {
                    lo: center.iter().zip(&half).map(|(c, h)| c - h).collect(),
                    hi: center.iter().zip(&half).map(|(c, h)| c + h).collect(),
                }
            }
            Shape::Union { parts } => {
                let mut b = parts[0].bbox();
                for p in &parts[1..] {
                    b = b.union(&p.bbox());
                }
                b
            }
        }
    }

    /// Radius of the largest ball about the center inside the set (per part for unions: the smallest).
    pub fn inradius(&self) -> f64 {
        match &self.shape {
            Shape::Ball { radius, .. } => *radius,
            Shape::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| 0.5 * (b - a)).fold(f64::INFINITY, f64::min),
            Shape::Ellipsoid { min_axis, .. } => *min_axis,
            Shape::Union { parts } => parts.iter().map(|p| p.inradius()).fold(f64::INFINITY, f64::min),
        }
    }

    /// Point at gauge radius r along a uniformly drawn boundary point (cone measure).
    fn radial_point(&self, rng: &mut impl Rng, r: f64, out: &mut [f64]) {
        match &self.shape {
            Shape::Ball { center, radius } => {
                unit_sphere(rng, out);
                for (o, c) in out.iter_mut().zip(center) {
                    *o = c + radius * r * *o;
                }
            }
            Shape::Ellipsoid { center, inv_root, .. } => {
                let mut u = vec![0.0; self.dim];
                unit_sphere(rng, &mut u);
                inv_root.mul_vec_into(&u, out);
                for (o, c) in out.iter_mut().zip(center) {
                    *o = c + r * *o;
                }
            }
            Shape::Box { lo, hi } => {
                // Faces of the cube [-1,1]^N all have equal area.
                let face = rng.random_range(0..self.dim);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                for (i, o) in out.iter_mut().enumerate() {
                    let p = if i == face { sign } else { 2.0 * rng.random::<f64>() - 1.0 };
                    *o = 0.5 * (lo[i] + hi[i]) + 0.5 * (hi[i] - lo[i]) * r * p;
                }
            }
            Shape::Union { .. } => unreachable!("handled by the caller"),
        }
    }

    pub fn sample_uniform(&self, rng: &mut impl Rng, out: &mut [f64]) {
        match &self.shape {
            Shape::Union { parts } => {
                let mut u = rng.random::<f64>() * self.measure;
                for p in parts {
                    if u < p.measure {
                        return p.sample_uniform(rng, out);
                    }
                    u -= p.measure;
                }
                parts.last().expect("nonempty").sample_uniform(rng, out)
            }
            _ => {
                let r = rng.random::<f64>().powf(1.0 / self.dim as f64);
                self.radial_point(rng, r, out);
            }
        }
    }

    /// Boundary layer {1 - w < gauge < 1} with w = min(1, width / inradius), per part.
    pub fn shell(&self, width: f64) -> Shell<'_> {
        let parts: Vec<&Region> = match &self.shape {
            Shape::Union { parts } => parts.iter().collect(),
            _ => vec![self],
        };
        let n = self.dim as i32;
        let layers: Vec<(f64, f64)> = parts
            .iter()
            .map(|p| {
                let w = (width / p.inradius()).clamp(0.0, 1.0);
                (w, p.measure * (1.0 - (1.0 - w).powi(n)))
            })
            .collect();
        let measure = layers.iter().map(|l| l.1).sum();
        Shell { region: self, parts, layers, measure }
    }

    /// Image under x ↦ diag(scale)·x (exact for balls, boxes, ellipsoids).
    pub fn scaled(&self, scale: &[f64]) -> Result<Region> {
        let spec = scale_spec(&self.spec, scale)?;
        Region::from_spec(&spec)
    }
}

fn scale_spec(spec: &RegionSpec, k: &[f64]) -> Result<RegionSpec> {
    let mul = |v: &Vec<f64>| v.iter().zip(k).map(|(a, b)| a * b).collect::<Vec<f64>>();
    Ok(match spec {
        RegionSpec::Ball { center, radius } => {
            let d: Vec<f64> = k.iter().map(|s| 1.0 / (s * radius).powi(2)).collect();
            RegionSpec::Ellipsoid { center: mul(center), matrix: SquareMatrix::diag(&d) }
        }
        RegionSpec::Box { lo, hi } => RegionSpec::Box { lo: mul(lo), hi: mul(hi) },
        RegionSpec::Ellipsoid { center, matrix } => {
            let n = matrix.dim();
            let mut m = SquareMatrix::zeros(n);
            for i in 0..n {
                for j in 0..n {
                    m.set(i, j, matrix.get(i, j) / (k[i] * k[j]));
                }
            }
            RegionSpec::Ellipsoid { center: mul(center), matrix: m }
        }
        RegionSpec::Union { parts } => {
            RegionSpec::Union { parts: parts.iter().map(|p| scale_spec(p, k)).collect::<Result<_>>()? }
        }
    })
}

fn unit_sphere(rng: &mut impl Rng, out: &mut [f64]) {
    loop {
        fill_normal(rng, out);
        let r = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r > 1e-12 {
            out.iter_mut().for_each(|v| *v /= r);
            return;
        }
    }
}

fn check_disjoint(parts: &[Region]) -> Result<()> {
    for i in 0..parts.len() {
        for j in i + 1..parts.len() {
            if !parts[i].bbox().overlaps(&parts[j].bbox()) {
                continue;
            }
            let mut rng = stream(0x0DD5_EED, (i * parts.len() + j) as u64);
            let mut x = vec![0.0; parts[i].dim];
            for _ in 0..4096 {
                parts[i].sample_uniform(&mut rng, &mut x);
                if parts[j].contains(&x) {
                    return Err(KfpError::InvalidInput(format!("union parts {i} and {j} overlap")));
                }
                parts[j].sample_uniform(&mut rng, &mut x);
                if parts[i].contains(&x) {
                    return Err(KfpError::InvalidInput(format!("union parts {i} and {j} overlap")));
                }
            }
        }
    }
    Ok(())
}

/// Boundary layer of a region, used to concentrate samples where the kernel crosses ∂E.
pub struct Shell<'a> {
    region: &'a Region,
    parts: Vec<&'a Region>,
    layers: Vec<(f64, f64)>,
    measure: f64,
}

impl Shell<'_> {
    pub fn measure(&self) -> f64 {
        self.measure
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self.region.gauge_part(x) {
            Some((g, i)) if g < 1.0 => {
                let g = if self.parts.len() > 1 { self.parts[i].gauge(x) } else { g };
                g > 1.0 - self.layers[i].0
            }
            _ => false,
        }
    }

    pub fn sample(&self, rng: &mut impl Rng, out: &mut [f64]) {
        let mut u = rng.random::<f64>() * self.measure;
        let mut k = self.parts.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            if u < l.1 {
                k = i;
                break;
            }
            u -= l.1;
        }
        let n = self.region.dim as f64;
        let inner = (1.0 - self.layers[k].0).powf(n);
        let r = (inner + (1.0 - inner) * rng.random::<f64>()).powf(1.0 / n);
        self.parts[k].radial_point(rng, r.min(1.0 - 1e-15), out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_disc_measure() {
        let b = Region::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert!((b.measure() - std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn overlapping_union_rejected() {
        let a = Region::ball(vec![0.0, 0.0], 1.0).unwrap();
        let b = Region::ball(vec![0.5, 0.0], 1.0).unwrap();
        assert!(Region::union(vec![a, b]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let r = Region::from_json(r#"{"shape":"box","lo":[0,0],"hi":[1,2]}"#).unwrap();
        assert_eq!(r.measure(), 2.0);
        let again = Region::from_json(&r.to_json()).unwrap();
        assert_eq!(again.measure(), 2.0);
    }
}
