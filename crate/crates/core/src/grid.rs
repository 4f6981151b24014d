//! Cell-vertex rectangular grids and nodal fields.
//!
//! Nodes are laid out row-major with the last axis fastest. Node coordinates
//! are computed as `(lo * (n - 1 - i) + hi * i) / (n - 1)`, which makes the
//! coordinates of mirrored nodes exact negatives of each other whenever
//! `lo == -hi`. The reflection-symmetry properties of the solvers rely on that.

use std::io::{BufRead, Write};

use serde::Serialize;

use crate::error::{Error, Result};

/// One grid axis: `nodes` equispaced vertices covering `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, nodes: usize) -> Result<Self> {
        if nodes < 3 {
            return Err(Error::InvalidParameter(format!(
                "an axis needs at least 3 nodes, got {nodes}"
            )));
        }
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::InvalidParameter(format!(
                "axis extent [{lo}, {hi}] is empty or not finite"
            )));
        }
        Ok(Self { lo, hi, nodes })
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.nodes - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        let n = (self.nodes - 1) as f64;
        (self.lo * (n - i as f64) + self.hi * i as f64) / n
    }

    /// Trapezoidal quadrature weight of node `i`.
    pub fn weight(&self, i: usize) -> f64 {
        let h = self.spacing();
        if i == 0 || i + 1 == self.nodes {
            0.5 * h
        } else {
            h
        }
    }

    pub fn is_mirror_symmetric(&self) -> bool {
        self.lo == -self.hi
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Grid {
    axes: Vec<Axis>,
    #[serde(skip)]
    strides: Vec<usize>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::InvalidParameter(format!(
                "grids are 1- or 2-dimensional, got {} axes",
                axes.len()
            )));
        }
        let mut strides = vec![1; axes.len()];
        for k in (0..axes.len() - 1).rev() {
            strides[k] = strides[k + 1] * axes[k + 1].nodes;
        }
        Ok(Self { axes, strides })
    }

    /// Same extent and node count along every axis.
    pub fn uniform(dim: usize, lo: f64, hi: f64, nodes: usize) -> Result<Self> {
        let axis = Axis::new(lo, hi, nodes)?;
        Self::new(vec![axis; dim])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, k: usize) -> &Axis {
        &self.axes[k]
    }

    pub fn stride(&self, k: usize) -> usize {
        self.strides[k]
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.nodes).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, k: usize) -> f64 {
        self.axes[k].spacing()
    }

    pub fn min_spacing(&self) -> f64 {
        self.axes
            .iter()
            .map(Axis::spacing)
            .fold(f64::INFINITY, f64::min)
    }

    /// Index of node `idx` along axis `k`.
    pub fn index_along(&self, idx: usize, k: usize) -> usize {
        (idx / self.strides[k]) % self.axes[k].nodes
    }

    pub fn coord(&self, idx: usize, k: usize) -> f64 {
        self.axes[k].coord(self.index_along(idx, k))
    }

    pub fn point_into(&self, idx: usize, out: &mut [f64]) {
        for (k, slot) in out.iter_mut().enumerate().take(self.dim()) {
            *slot = self.coord(idx, k);
        }
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        self.point_into(idx, &mut p);
        p
    }

    /// Nearest node to `x` (clamped to the grid).
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        self.axes
            .iter()
            .zip(&self.strides)
            .zip(x)
            .map(|((axis, stride), &xk)| {
                let i = ((xk - axis.lo) / axis.spacing()).round();
                let i = i.clamp(0.0, (axis.nodes - 1) as f64) as usize;
                i * stride
            })
            .sum()
    }

    /// Tensor-product trapezoidal weights.
    pub fn weights(&self) -> Vec<f64> {
        (0..self.len())
            .map(|idx| {
                (0..self.dim())
                    .map(|k| self.axes[k].weight(self.index_along(idx, k)))
                    .product()
            })
            .collect()
    }

    /// Node obtained by flipping the first coordinate.
    pub fn mirror_index(&self, idx: usize) -> usize {
        let n0 = self.axes[0].nodes;
        let i = self.index_along(idx, 0);
        idx - i * self.strides[0] + (n0 - 1 - i) * self.strides[0]
    }

    pub fn is_mirror_symmetric(&self) -> bool {
        self.axes[0].is_mirror_symmetric()
    }

    /// Whether the node lies on the boundary of the box.
    pub fn on_boundary(&self, idx: usize) -> bool {
        (0..self.dim()).any(|k| {
            let i = self.index_along(idx, k);
            i == 0 || i + 1 == self.axes[k].nodes
        })
    }

    /// Distance (in nodes) from the nearest face of the box.
    pub fn nodes_from_boundary(&self, idx: usize) -> usize {
        (0..self.dim())
            .map(|k| {
                let i = self.index_along(idx, k);
                i.min(self.axes[k].nodes - 1 - i)
            })
            .min()
            .unwrap_or(0)
    }

    /// Evaluates `f` at every node.
    pub fn tabulate<F>(&self, mut f: F) -> Vec<f64>
    where
        F: FnMut(&[f64]) -> f64,
    {
        let mut p = vec![0.0; self.dim()];
        (0..self.len())
            .map(|idx| {
                self.point_into(idx, &mut p);
                f(&p)
            })
            .collect()
    }

    /// Fallible variant of [`Grid::tabulate`].
    pub fn try_tabulate<F>(&self, mut f: F) -> Result<Vec<f64>>
    where
        F: FnMut(&[f64]) -> Result<f64>,
    {
        let mut p = vec![0.0; self.dim()];
        (0..self.len())
            .map(|idx| {
                self.point_into(idx, &mut p);
                f(&p)
            })
            .collect()
    }
}

/// A density (or any scalar) sampled at the nodes of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    grid: Grid,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "field has {} values but the grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Trapezoidal integral of the field.
    pub fn mass(&self) -> f64 {
        weighted_sum(&self.grid.weights(), &self.values)
    }

    /// Rescales to unit trapezoidal mass and returns the previous mass.
    pub fn normalize(&mut self) -> Result<f64> {
        let mass = self.mass();
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cannot normalize a field with mass {mass}"
            )));
        }
        self.values.iter_mut().for_each(|v| *v /= mass);
        Ok(mass)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Trapezoidal L1 distance to another field on the same grid.
    pub fn l1_distance(&self, other: &GridField) -> f64 {
        let w = self.grid.weights();
        w.iter()
            .zip(&self.values)
            .zip(&other.values)
            .map(|((w, a), b)| w * (a - b).abs())
            .sum()
    }

    /// Writes the plain-text snapshot: dimension, then `nodes lo hi` per axis,
    /// then one value per line in row-major order.
    pub fn write_snapshot<W: Write>(&self, mut out: W, time: Option<f64>) -> Result<()> {
        if let Some(t) = time {
            writeln!(out, "# t = {t}")?;
        }
        writeln!(out, "{}", self.grid.dim())?;
        for axis in self.grid.axes() {
            writeln!(out, "{} {} {}", axis.nodes, axis.lo, axis.hi)?;
        }
        for v in &self.values {
            writeln!(out, "{v:e}")?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input
            .lines()
            .map(|l| l.map(|s| s.trim().to_owned()))
            .filter(|l| !matches!(l, Ok(s) if s.is_empty() || s.starts_with('#')));
        let mut next = |what: &str| -> Result<String> {
            lines
                .next()
                .transpose()?
                .ok_or_else(|| Error::Snapshot(format!("unexpected end of input reading {what}")))
        };
        let dim: usize = next("dimension")?
            .parse()
            .map_err(|e| Error::Snapshot(format!("bad dimension: {e}")))?;
        let mut axes = Vec::with_capacity(dim);
        for k in 0..dim {
            let line = next("axis header")?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(Error::Snapshot(format!("axis {k}: expected `nodes lo hi`")));
            }
            let bad = |e: &dyn std::fmt::Display| Error::Snapshot(format!("axis {k}: {e}"));
            let nodes = parts[0].parse().map_err(|e| bad(&e))?;
            let lo = parts[1].parse().map_err(|e| bad(&e))?;
            let hi = parts[2].parse().map_err(|e| bad(&e))?;
            axes.push(Axis::new(lo, hi, nodes)?);
        }
        let grid = Grid::new(axes)?;
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            let v = next("node value")?
                .parse()
                .map_err(|e| Error::Snapshot(format!("node {i}: {e}")))?;
            values.push(v);
        }
        Self::new(grid, values)
    }
}

/// `Σ w_i v_i` over eight interleaved partial sums, which breaks the serial
/// dependency chain of a plain fold.
pub(crate) fn weighted_sum(weights: &[f64], values: &[f64]) -> f64 {
    weighted_sums(weights, weights, values).0
}

/// `(Σ a_i v_i, Σ c_i v_i)` in one pass.
pub(crate) fn weighted_sums(a: &[f64], c: &[f64], values: &[f64]) -> (f64, f64) {
    const LANES: usize = 8;
    let mut x = [0.0; LANES];
    let mut y = [0.0; LANES];
    let split = values.len() / LANES * LANES;
    for ((a, c), v) in a[..split]
        .chunks_exact(LANES)
        .zip(c[..split].chunks_exact(LANES))
        .zip(values[..split].chunks_exact(LANES))
    {
        for k in 0..LANES {
            x[k] += a[k] * v[k];
            y[k] += c[k] * v[k];
        }
    }
    let (mut sx, mut sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    for i in split..values.len() {
        sx += a[i] * values[i];
        sy += c[i] * values[i];
    }
    (sx, sy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mirrored_coordinates_are_exact_negatives() {
        let axis = Axis::new(-1.3, 1.3, 131).unwrap();
        for i in 0..131 {
            assert_eq!(axis.coord(i), -axis.coord(130 - i));
        }
        assert_eq!(axis.coord(65), 0.0);
    }

    #[test]
    fn trapezoid_weights_integrate_constants_exactly() {
        let grid = Grid::new(vec![
            Axis::new(-1.0, 2.0, 7).unwrap(),
            Axis::new(0.0, 0.5, 5).unwrap(),
        ])
        .unwrap();
        let total: f64 = grid.weights().iter().sum();
        assert!((total - 1.5).abs() < 1e-14);
    }

    #[test]
    fn mirror_index_is_an_involution() {
        let grid = Grid::uniform(2, -1.0, 1.0, 9).unwrap();
        for idx in 0..grid.len() {
            let m = grid.mirror_index(idx);
            assert_eq!(grid.mirror_index(m), idx);
            assert_eq!(grid.coord(m, 0), -grid.coord(idx, 0));
            assert_eq!(grid.coord(m, 1), grid.coord(idx, 1));
        }
    }

    #[test]
    fn rejects_degenerate_axes() {
        assert!(Axis::new(0.0, 1.0, 2).is_err());
        assert!(Axis::new(1.0, 1.0, 5).is_err());
        assert!(Grid::new(vec![]).is_err());
    }

    #[test]
    fn truncated_snapshot_is_an_error() {
        let text = "1\n5 0 1\n0.1\n0.2\n";
        assert!(GridField::read_snapshot(text.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn snapshot_round_trip(
            nx in 3usize..8,
            ny in 3usize..8,
            seed in proptest::collection::vec(-1e3f64..1e3, 64),
        ) {
            let grid = Grid::new(vec![
                Axis::new(-1.0, 1.0, nx).unwrap(),
                Axis::new(-0.5, 2.0, ny).unwrap(),
            ]).unwrap();
            let values: Vec<f64> = (0..grid.len()).map(|i| seed[i % seed.len()]).collect();
            let field = GridField::new(grid, values).unwrap();
            let mut buf = Vec::new();
            field.write_snapshot(&mut buf, Some(3.5)).unwrap();
            let back = GridField::read_snapshot(buf.as_slice()).unwrap();
            prop_assert_eq!(back, field);
        }
    }
}
