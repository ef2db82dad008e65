//! Discrete-time LTI plants: state-space form, simulation and exact Markov
//! parameters.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::markov::MarkovSequence;

/// `x_{k+1} = A x_k + B u_k + D w_k`, `y_k = C x_k`.
///
/// The disturbance map `D` defaults to `B`, i.e. the disturbance enters
/// through the input channel.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    a: Mat,
    b: Mat,
    c: Mat,
    d_dist: Mat,
}

impl StateSpace {
    pub fn new(a: Mat, b: Mat, c: Mat) -> Result<Self> {
        let d = b.clone();
        Self::with_disturbance(a, b, c, d)
    }

    pub fn with_disturbance(a: Mat, b: Mat, c: Mat, d_dist: Mat) -> Result<Self> {
        let n = a.nrows();
        if n == 0 {
            return Err(Error::dim("A", "at least one state", "n = 0"));
        }
        if a.ncols() != n {
            return Err(Error::dim("A", format!("{n}x{n}"), shape(&a)));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::dim("B", format!("{n}xm with m >= 1"), shape(&b)));
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(Error::dim("C", format!("px{n} with p >= 1"), shape(&c)));
        }
        if d_dist.shape() != b.shape() {
            return Err(Error::dim("D_dist", shape(&b), shape(&d_dist)));
        }
        Ok(Self { a, b, c, d_dist })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }
    pub fn b(&self) -> &Mat {
        &self.b
    }
    pub fn c(&self) -> &Mat {
        &self.c
    }
    pub fn d_dist(&self) -> &Mat {
        &self.d_dist
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }
    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    /// True when the disturbance map differs from the input map.
    pub fn has_separate_disturbance(&self) -> bool {
        self.d_dist != self.b
    }

    pub fn augment(&self) -> AugmentedSystem {
        let (n, m, p) = (self.states(), self.inputs(), self.outputs());
        let mut a_hat = Mat::zeros(n + m, n + m);
        a_hat.view_mut((0, 0), (n, n)).copy_from(&self.a);
        a_hat.view_mut((0, n), (n, m)).copy_from(&self.b);
        a_hat.view_mut((n, n), (m, m)).fill_with_identity();

        let mut b_hat = Mat::zeros(n + m, m);
        b_hat.view_mut((0, 0), (n, m)).copy_from(&self.b);
        b_hat.view_mut((n, 0), (m, m)).fill_with_identity();

        let mut c_hat = Mat::zeros(p, n + m);
        c_hat.view_mut((0, 0), (p, n)).copy_from(&self.c);

        let mut d_hat = Mat::zeros(n + m, m);
        d_hat.view_mut((0, 0), (n, m)).copy_from(&self.d_dist);

        AugmentedSystem {
            n,
            a_hat,
            b_hat,
            c_hat,
            d_hat,
        }
    }

    /// Runs the plant from `x0`. Only `u`, `w` and `v` of `inputs` are read;
    /// the returned trace carries them through with `y` filled in.
    pub fn simulate(&self, x0: &Vector, inputs: &SignalTrace) -> Result<SignalTrace> {
        if x0.len() != self.states() {
            return Err(Error::dim("x0", self.states(), x0.len()));
        }
        if inputs.is_empty() {
            return Err(Error::InvalidArgument("empty input trace".into()));
        }
        inputs.check(self.inputs(), self.outputs())?;
        let mut out = inputs.clone();
        let mut x = x0.clone();
        for k in 0..inputs.len() {
            out.y[k] = &self.c * &x + &inputs.v[k];
            x = &self.a * &x + &self.b * &inputs.u[k] + &self.d_dist * &inputs.w[k];
        }
        Ok(out)
    }

    /// Exact Markov blocks `H_0..H_count` and `M_0..M_count`.
    pub fn markov(&self, count: usize) -> Result<MarkovSequence> {
        if count == 0 {
            return Err(Error::InvalidArgument("Markov count must be >= 1".into()));
        }
        let (m, p) = (self.inputs(), self.outputs());
        let mut h = vec![Mat::zeros(p, m)];
        let mut md = vec![Mat::zeros(p, m)];
        let mut ab = self.b.clone();
        let mut ad = self.d_dist.clone();
        for _ in 1..=count {
            h.push(&self.c * &ab);
            md.push(&self.c * &ad);
            ab = &self.a * ab;
            ad = &self.a * ad;
        }
        MarkovSequence::new(h, md)
    }

    /// Random plant with eigenvalues inside the disc of radius `radius`.
    ///
    /// A block-diagonal real Schur form with the requested spectrum is
    /// rotated by a random orthogonal similarity, which keeps the plant
    /// well scaled.
    pub fn random_stable<R: Rng + ?Sized>(
        rng: &mut R,
        n: usize,
        m: usize,
        p: usize,
        radius: f64,
    ) -> Result<Self> {
        if n == 0 || m == 0 || p == 0 {
            return Err(Error::InvalidArgument(
                "random plant dimensions must be positive".into(),
            ));
        }
        let mut t = Mat::zeros(n, n);
        let mut i = 0;
        while i < n {
            let r = radius * rng.gen_range(0.1..1.0);
            if i + 1 < n && rng.gen_bool(0.5) {
                let th = rng.gen_range(0.1..std::f64::consts::PI - 0.1);
                let (s, c) = th.sin_cos();
                t[(i, i)] = r * c;
                t[(i, i + 1)] = -r * s;
                t[(i + 1, i)] = r * s;
                t[(i + 1, i + 1)] = r * c;
                i += 2;
            } else {
                t[(i, i)] = if rng.gen_bool(0.5) { r } else { -r };
                i += 1;
            }
        }
        let q = gaussian(rng, n, n).qr().q();
        let a = &q * t * q.transpose();
        let b = gaussian(rng, n, m);
        let c = gaussian(rng, p, n) / (n as f64).sqrt();
        Self::new(a, b, c)
    }

    /// Plain-text form: header `n m p`, then the rows of A, B, C and D_dist.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {} {}\n", self.states(), self.inputs(), self.outputs());
        for mat in [&self.a, &self.b, &self.c, &self.d_dist] {
            for r in 0..mat.nrows() {
                let row: Vec<String> = mat.row(r).iter().map(|v| format!("{v:?}")).collect();
                let _ = writeln!(s, "{}", row.join(" "));
            }
        }
        s
    }

    /// Parses [`StateSpace::to_text`] output. The D_dist rows are optional;
    /// blank lines and `#` comments are ignored.
    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(origin, "missing 'n m p' header"))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(origin, format!("bad header '{header}': {e}")))?;
        let [n, m, p] = dims[..] else {
            return Err(Error::parse(origin, format!("header needs 3 integers, got '{header}'")));
        };
        let rows: Vec<Vec<f64>> = lines
            .map(|l| {
                l.split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
            })
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(origin, format!("bad number: {e}")))?;
        let expected = 2 * n + p;
        if rows.len() != expected && rows.len() != expected + n {
            return Err(Error::parse(
                origin,
                format!("expected {expected} or {} matrix rows, found {}", expected + n, rows.len()),
            ));
        }
        let block = |name: &str, start: usize, r: usize, c: usize| -> Result<Mat> {
            let mut out = Mat::zeros(r, c);
            for i in 0..r {
                let row = &rows[start + i];
                if row.len() != c {
                    return Err(Error::parse(
                        origin,
                        format!("{name} row {i}: expected {c} values, found {}", row.len()),
                    ));
                }
                for (j, v) in row.iter().enumerate() {
                    out[(i, j)] = *v;
                }
            }
            Ok(out)
        };
        let a = block("A", 0, n, n)?;
        let b = block("B", n, n, m)?;
        let c = block("C", 2 * n, p, n)?;
        let d = if rows.len() > expected {
            block("D_dist", expected, n, m)?
        } else {
            b.clone()
        };
        Self::with_disturbance(a, b, c, d)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

fn shape(m: &Mat) -> String {
    format!("{}x{}", m.nrows(), m.ncols())
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// Incremental form with state `[x_k; u_{k-1}]` and input `Δu_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSystem {
    n: usize,
    pub a_hat: Mat,
    pub b_hat: Mat,
    pub c_hat: Mat,
    pub d_hat: Mat,
}

impl AugmentedSystem {
    pub fn states(&self) -> usize {
        self.a_hat.nrows()
    }

    /// Recovers the original plant from the augmented blocks.
    pub fn original(&self) -> Result<StateSpace> {
        let n = self.n;
        let m = self.b_hat.ncols();
        let p = self.c_hat.nrows();
        StateSpace::with_disturbance(
            self.a_hat.view((0, 0), (n, n)).into_owned(),
            self.a_hat.view((0, n), (n, m)).into_owned(),
            self.c_hat.view((0, 0), (p, n)).into_owned(),
            self.d_hat.view((0, 0), (n, m)).into_owned(),
        )
    }

    /// `[Ĉ; ĈÂ; ...; ĈÂ^(rows-1)]`.
    pub fn observability(&self, rows: usize) -> Mat {
        let p = self.c_hat.nrows();
        let mut out = Mat::zeros(rows * p, self.states());
        let mut ca = self.c_hat.clone();
        for i in 0..rows {
            out.view_mut((i * p, 0), ca.shape()).copy_from(&ca);
            ca = &ca * &self.a_hat;
        }
        out
    }
}

/// Per-step signals `u_k`, `w_k`, `y_k`, `v_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTrace {
    pub u: Vec<Vector>,
    pub w: Vec<Vector>,
    pub y: Vec<Vector>,
    pub v: Vec<Vector>,
}

impl SignalTrace {
    /// Input-only trace with zero disturbance, noise and output.
    pub fn from_inputs(u: Vec<Vector>, p: usize) -> Self {
        let len = u.len();
        let m = u.first().map_or(0, |v| v.len());
        Self {
            u,
            w: vec![Vector::zeros(m); len],
            y: vec![Vector::zeros(p); len],
            v: vec![Vector::zeros(p); len],
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    fn check(&self, m: usize, p: usize) -> Result<()> {
        let len = self.u.len();
        for (name, seq) in [("w", &self.w), ("y", &self.y), ("v", &self.v)] {
            if seq.len() != len {
                return Err(Error::dim(format!("trace length of {name}"), len, seq.len()));
            }
        }
        for k in 0..len {
            if self.u[k].len() != m {
                return Err(Error::dim(format!("u[{k}]"), m, self.u[k].len()));
            }
            if self.w[k].len() != m {
                return Err(Error::dim(format!("w[{k}]"), m, self.w[k].len()));
            }
            if self.v[k].len() != p {
                return Err(Error::dim(format!("v[{k}]"), p, self.v[k].len()));
            }
        }
        Ok(())
    }
}
