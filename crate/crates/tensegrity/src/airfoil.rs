//! NACA 4-digit geometry, error-bound surface spacing, initial tensegrity
//! configuration and the bar-rotation morphing target.

use datatrack::Vector;
use nalgebra::Matrix3xX;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::TensegrityTopology;

/// NACA 4-digit section with a closed trailing edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Naca4 {
    pub camber: f64,
    pub camber_pos: f64,
    pub thickness: f64,
}

impl Naca4 {
    pub fn parse(code: &str) -> Result<Self> {
        let digits: Vec<u32> = code.trim().chars().filter_map(|c| c.to_digit(10)).collect();
        if digits.len() != 4 || code.trim().len() != 4 {
            return Err(Error::Airfoil(format!("'{code}' is not a 4-digit NACA code")));
        }
        let camber = digits[0] as f64 / 100.0;
        let camber_pos = digits[1] as f64 / 10.0;
        let thickness = (digits[2] * 10 + digits[3]) as f64 / 100.0;
        if thickness <= 0.0 {
            return Err(Error::Airfoil(format!("'{code}' has zero thickness")));
        }
        if camber > 0.0 && camber_pos == 0.0 {
            return Err(Error::Airfoil(format!("'{code}' has camber but no camber position")));
        }
        Ok(Self {
            camber,
            camber_pos,
            thickness,
        })
    }

    fn half_thickness(&self, x: f64) -> f64 {
        5.0 * self.thickness
            * (0.2969 * x.sqrt() - 0.1260 * x - 0.3516 * x * x + 0.2843 * x.powi(3) - 0.1036 * x.powi(4))
    }

    fn camber_line(&self, x: f64) -> (f64, f64) {
        let (m, p) = (self.camber, self.camber_pos);
        if m == 0.0 {
            return (0.0, 0.0);
        }
        if x < p {
            (m / (p * p) * (2.0 * p * x - x * x), 2.0 * m / (p * p) * (p - x))
        } else {
            let d = (1.0 - p) * (1.0 - p);
            (m / d * ((1.0 - 2.0 * p) + 2.0 * p * x - x * x), 2.0 * m / d * (p - x))
        }
    }

    /// Surface point `(x, z)` for chord fraction `x ∈ [0, 1]`, unit chord.
    pub fn point(&self, x: f64, upper: bool) -> [f64; 2] {
        let yt = self.half_thickness(x);
        let (yc, slope) = self.camber_line(x);
        let (s, c) = slope.atan().sin_cos();
        if upper {
            [x - yt * s, yc + yt * c]
        } else {
            [x + yt * s, yc - yt * c]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AirfoilSpec {
    pub naca: String,
    pub chord: f64,
    /// End of the rigid leading segment `[0, root]`, meters.
    pub root: f64,
    pub mu: f64,
    pub delta: f64,
}

impl Default for AirfoilSpec {
    fn default() -> Self {
        Self {
            naca: "2412".into(),
            chord: 1.0,
            root: 0.3,
            mu: 1.0 / 3.0,
            delta: 0.001,
        }
    }
}

impl AirfoilSpec {
    pub fn validate(&self) -> Result<Naca4> {
        let section = Naca4::parse(&self.naca)?;
        if !(self.chord > 0.0) {
            return Err(Error::Airfoil(format!("chord must be positive, got {}", self.chord)));
        }
        if !(self.root > 0.0 && self.root < self.chord) {
            return Err(Error::Airfoil(format!("rigid root must satisfy 0 < x_r < c, got {}", self.root)));
        }
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return Err(Error::Airfoil(format!("mu must lie in (0, 1), got {}", self.mu)));
        }
        if !(self.delta > 0.0) {
            return Err(Error::Airfoil(format!("error bound must be positive, got {}", self.delta)));
        }
        Ok(section)
    }

    /// Surface point in meters.
    pub fn point(&self, section: &Naca4, x: f64, upper: bool) -> [f64; 2] {
        let [px, pz] = section.point(x / self.chord, upper);
        [px * self.chord, pz * self.chord]
    }
}

/// Largest perpendicular distance between the surface arc on `[s0, s1]`
/// and its chord.
///
/// `samples` uniform points locate the peak, which is then refined by a
/// golden-section search on the neighbouring interval.
pub fn segment_deviation(spec: &AirfoilSpec, section: &Naca4, s0: f64, s1: f64, upper: bool, samples: usize) -> f64 {
    let a = spec.point(section, s0, upper);
    let b = spec.point(section, s1, upper);
    let (dx, dz) = (b[0] - a[0], b[1] - a[1]);
    let len = dx.hypot(dz);
    let dist = |s: f64| {
        let p = spec.point(section, s, upper);
        ((p[0] - a[0]) * dz - (p[1] - a[1]) * dx).abs() / len
    };
    let samples = samples.max(2);
    let h = (s1 - s0) / (samples - 1) as f64;
    let (mut best, mut arg) = (0.0_f64, 0);
    for i in 0..samples {
        let d = dist(s0 + h * i as f64);
        if d > best {
            best = d;
            arg = i;
        }
    }
    let (mut lo, mut hi) = (s0 + h * arg.saturating_sub(1) as f64, (s0 + h * (arg + 1) as f64).min(s1));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if dist(m1) > dist(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    best.max(dist(0.5 * (lo + hi)))
}

const SEARCH_SAMPLES: usize = 1500;

/// Stations and surface nodes produced by error-bound spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceNodes {
    /// Chordwise stations from the root to the trailing edge, inclusive.
    pub stations: Vec<f64>,
    /// Upper and lower nodes at every station except the trailing edge.
    pub upper: Vec<[f64; 2]>,
    pub lower: Vec<[f64; 2]>,
}

impl SurfaceNodes {
    pub fn q(&self) -> usize {
        self.stations.len() - 1
    }
}

/// Greedy farthest-advance spacing shared by both surfaces: from the root,
/// each step goes as far aft as possible while the upper and the lower
/// segment both stay within `delta` of the surface.
pub fn surface_points(spec: &AirfoilSpec) -> Result<SurfaceNodes> {
    let section = spec.validate()?;
    let c = spec.chord;
    let fits = |a: f64, b: f64| {
        segment_deviation(spec, &section, a, b, true, SEARCH_SAMPLES) <= spec.delta
            && segment_deviation(spec, &section, a, b, false, SEARCH_SAMPLES) <= spec.delta
    };
    let mut stations = vec![spec.root];
    let mut s = spec.root;
    while s < c {
        if fits(s, c) {
            stations.push(c);
            break;
        }
        let (mut lo, mut hi) = (s, c);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if fits(s, mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if lo <= s {
            return Err(Error::Airfoil(format!("no admissible segment starts at x = {s}")));
        }
        s = lo;
        stations.push(s);
    }
    let segments = stations.len() - 1;
    if segments < 2 {
        return Err(Error::TooCoarse {
            delta: spec.delta,
            segments,
        });
    }
    let inner = &stations[..segments];
    Ok(SurfaceNodes {
        upper: inner.iter().map(|&x| spec.point(&section, x, true)).collect(),
        lower: inner.iter().map(|&x| spec.point(&section, x, false)).collect(),
        stations,
    })
}

/// Node matrix with interior nodes at `μ·upper + (1-μ)·lower` and the
/// trailing edge at `(c, 0)`.
pub fn initial_configuration(spec: &AirfoilSpec) -> Result<TensegrityTopology> {
    let surf = surface_points(spec)?;
    let q = surf.q();
    let mut nodes = Matrix3xX::zeros(3 * q + 1);
    nodes[(0, q)] = spec.chord;
    for i in 0..q {
        let (u, l) = (surf.upper[i], surf.lower[i]);
        for (col, p) in [(q + 1 + i, u), (2 * q + 1 + i, l)] {
            nodes[(0, col)] = p[0];
            nodes[(2, col)] = p[1];
        }
        nodes[(0, i)] = spec.mu * u[0] + (1.0 - spec.mu) * l[0];
        nodes[(2, i)] = spec.mu * u[1] + (1.0 - spec.mu) * l[1];
    }
    TensegrityTopology::new(q, nodes)
}

/// Absolute rotation of each horizontal bar, radians, positive trailing
/// edge down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphSpec {
    pub angles: Vec<f64>,
}

impl MorphSpec {
    /// `θ_i = i · step` for `i = 1..=q`.
    pub fn linear(q: usize, step: f64) -> Self {
        Self {
            angles: (1..=q).map(|i| i as f64 * step).collect(),
        }
    }
}

/// Rotates `v` (in the x-z plane) by `theta`, trailing edge down for positive angles.
fn rotate(theta: f64, dx: f64, dz: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    (c * dx + s * dz, -s * dx + c * dz)
}

/// Target node matrix: bar `i` of the horizontal chain is rotated by
/// `θ_i` about its inboard node, and the vertical bars at the inboard node
/// of bar `i` rotate with it. Station 0 is attached to the root and stays.
pub fn morph_target(topology: &TensegrityTopology, morph: &MorphSpec) -> Result<Matrix3xX<f64>> {
    let q = topology.q;
    if morph.angles.len() != q {
        return Err(Error::Dimension {
            what: "morph angles".into(),
            expected: q,
            found: morph.angles.len(),
        });
    }
    let n = &topology.nodes;
    let mut x = n.clone();
    let place = |x: &mut Matrix3xX<f64>, pivot: usize, node: usize, theta: f64| {
        let (dx, dz) = rotate(theta, n[(0, node)] - n[(0, pivot)], n[(2, node)] - n[(2, pivot)]);
        x[(0, node)] = x[(0, pivot)] + dx;
        x[(2, node)] = x[(2, pivot)] + dz;
        x[(1, node)] = 0.0;
    };
    for i in 0..q {
        let theta = morph.angles[i];
        place(&mut x, i, i + 1, theta);
        if i >= 1 {
            place(&mut x, i, topology.upper(i), theta);
            place(&mut x, i, topology.lower(i), theta);
        }
    }
    Ok(x)
}

/// Free-node `(x, z)` coordinates stacked in free-node order.
pub fn free_coordinates(topology: &TensegrityTopology, nodes: &Matrix3xX<f64>) -> Vector {
    let free = topology.free_nodes();
    Vector::from_iterator(
        2 * free.len(),
        free.iter().flat_map(|&i| [nodes[(0, i)], nodes[(2, i)]]),
    )
}

/// Displacement of the free nodes from the initial configuration to `target`.
pub fn target_displacement(topology: &TensegrityTopology, target: &Matrix3xX<f64>) -> Vector {
    free_coordinates(topology, target) - free_coordinates(topology, &topology.nodes)
}

/// `r_k = (k / N) · d` for `k = 0..=N`.
pub fn linear_reference(displacement: &Vector, horizon: usize) -> Vec<Vector> {
    (0..=horizon)
        .map(|k| {
            if k == horizon {
                displacement.clone()
            } else {
                displacement * (k as f64 / horizon as f64)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn naca_parse() {
        let s = Naca4::parse("2412").unwrap();
        assert_eq!((s.camber, s.camber_pos, s.thickness), (0.02, 0.4, 0.12));
        assert!(Naca4::parse("241").is_err());
        assert!(Naca4::parse("24a2").is_err());
    }

    #[test]
    fn closed_trailing_edge() {
        let s = Naca4::parse("2412").unwrap();
        let u = s.point(1.0, true);
        let l = s.point(1.0, false);
        assert!((u[0] - l[0]).abs() < 1e-3 && (u[1] - l[1]).abs() < 1e-3);
    }

    #[test]
    fn bad_specs_rejected() {
        let mut spec = AirfoilSpec::default();
        spec.root = 1.5;
        assert!(spec.validate().is_err());
        let mut spec = AirfoilSpec::default();
        spec.mu = 1.0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn coarse_bound_errors() {
        let spec = AirfoilSpec {
            delta: 0.05,
            ..AirfoilSpec::default()
        };
        assert!(matches!(surface_points(&spec), Err(Error::TooCoarse { .. })));
    }

    #[test]
    fn zero_angles_keep_configuration() {
        let topo = initial_configuration(&AirfoilSpec::default()).unwrap();
        let target = morph_target(&topo, &MorphSpec::linear(topo.q, 0.0)).unwrap();
        assert!((&target - &topo.nodes).amax() < 1e-15);
        assert!(target_displacement(&topo, &target).amax() < 1e-15);
    }
}
