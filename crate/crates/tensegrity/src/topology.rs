//! Node, bar and string layout of the airfoil tensegrity of complexity `q`.
//!
//! Node numbering (0-based here, 1-based in the usual notation `n_1..n_{3q+1}`):
//! interior chain nodes `0..q`, trailing edge `q`, upper surface
//! `q+1..=2q`, lower surface `2q+1..=3q`. Station `i` holds interior node
//! `i`, upper node `q+1+i` and lower node `2q+1+i`.

use datatrack::Mat;
use nalgebra::Matrix3xX;

use crate::error::{Error, Result};

/// Member as `(start, end)` node indices, 0-based.
pub type Member = (usize, usize);

/// Bar and string index tables, 0-based, in table order.
pub fn connectivity_pairs(q: usize) -> Result<(Vec<Member>, Vec<Member>)> {
    if q < 2 {
        return Err(Error::Complexity(q));
    }
    // Tables are written 1-based and shifted on output.
    let mut bars = Vec::with_capacity(3 * q);
    for i in 1..=q {
        bars.push((i, i + 1));
    }
    for i in q + 1..=2 * q {
        bars.push((i - q, i + 1));
    }
    for i in 2 * q + 1..=3 * q {
        bars.push((i - 2 * q, i + 1));
    }
    let mut strings = Vec::with_capacity(6 * q - 4);
    for i in 1..q {
        strings.push((i + 1 + q, i + 2 + q));
    }
    for i in 2..=q {
        strings.push((q + i, i));
    }
    for i in 1..q {
        strings.push((i, q + 2 + i));
    }
    for i in 1..q {
        strings.push((i, 2 * q + 2 + i));
    }
    for i in 2..=q {
        strings.push((2 * q + i, i));
    }
    for i in 1..q {
        strings.push((i + 1 + 2 * q, i + 2 + 2 * q));
    }
    strings.push((2 * q + 1, q + 1));
    strings.push((3 * q + 1, q + 1));
    let shift = |v: Vec<Member>| v.into_iter().map(|(a, b)| (a - 1, b - 1)).collect();
    Ok((shift(bars), shift(strings)))
}

/// Signed incidence matrix: row `j` has `-1` at the start node and `+1` at
/// the end node, so `N Cᵀ` gives end minus start.
pub fn incidence(members: &[Member], nodes: usize) -> Mat {
    let mut c = Mat::zeros(members.len(), nodes);
    for (j, &(a, b)) in members.iter().enumerate() {
        c[(j, a)] = -1.0;
        c[(j, b)] = 1.0;
    }
    c
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensegrityTopology {
    pub q: usize,
    /// 3 x (3q+1), columns are node coordinates (x, y, z) in meters.
    pub nodes: Matrix3xX<f64>,
    pub bars: Vec<Member>,
    pub strings: Vec<Member>,
    pub fixed: Vec<usize>,
}

impl TensegrityTopology {
    /// Builds the member tables for `q` around the given node matrix and
    /// fixes the three station-0 nodes that attach to the rigid root.
    pub fn new(q: usize, nodes: Matrix3xX<f64>) -> Result<Self> {
        let (bars, strings) = connectivity_pairs(q)?;
        if nodes.ncols() != 3 * q + 1 {
            return Err(Error::Dimension {
                what: "node matrix columns".into(),
                expected: 3 * q + 1,
                found: nodes.ncols(),
            });
        }
        Ok(Self {
            q,
            nodes,
            bars,
            strings,
            fixed: vec![0, q + 1, 2 * q + 1],
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.ncols()
    }

    pub fn trailing_edge(&self) -> usize {
        self.q
    }
    pub fn upper(&self, station: usize) -> usize {
        self.q + 1 + station
    }
    pub fn lower(&self, station: usize) -> usize {
        2 * self.q + 1 + station
    }

    pub fn free_nodes(&self) -> Vec<usize> {
        (0..self.node_count()).filter(|i| !self.fixed.contains(i)).collect()
    }

    /// Bars followed by strings.
    pub fn members(&self) -> Vec<Member> {
        self.bars.iter().chain(&self.strings).copied().collect()
    }

    pub fn c_b(&self) -> Mat {
        incidence(&self.bars, self.node_count())
    }
    pub fn c_s(&self) -> Mat {
        incidence(&self.strings, self.node_count())
    }

    /// `B = N C_bᵀ`, one bar vector per column.
    pub fn bar_vectors(&self) -> Mat {
        self.node_mat() * self.c_b().transpose()
    }

    /// `S = N C_sᵀ`, one string vector per column.
    pub fn string_vectors(&self) -> Mat {
        self.node_mat() * self.c_s().transpose()
    }

    fn node_mat(&self) -> Mat {
        Mat::from_column_slice(3, self.node_count(), self.nodes.as_slice())
    }

    pub fn member_length(&self, m: Member) -> f64 {
        (self.nodes.column(m.1) - self.nodes.column(m.0)).norm()
    }
}
