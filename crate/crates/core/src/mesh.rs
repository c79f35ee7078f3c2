//! Box domains, uniform tensor grids and sampled fields.
//!
//! Nodes include the boundary: along axis `i` node `j` sits at
//! `lower_i + j·h_i`, `j = 0..n_i`. The homogeneous Neumann condition is
//! closed by even reflection about the boundary node, so the ghost value
//! beyond a face is the mirror of the first interior value.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::pairwise_sum;
use crate::Point;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeshError {
    #[error("dimension must be 1, 2 or 3 (got {0})")]
    InvalidDimension(usize),
    #[error("box is empty along axis {axis}: lower {lower} >= upper {upper}")]
    InvertedBox { axis: usize, lower: f64, upper: f64 },
    #[error("axis {axis} has {nodes} nodes; at least 3 are required")]
    TooFewNodes { axis: usize, nodes: usize },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("snapshot grids differ")]
    GridMismatch,
    #[error("times must start at 0 (got {0})")]
    TimesNotStartingAtZero(f64),
    #[error("times must be strictly increasing (index {0})")]
    TimesNotIncreasing(usize),
    #[error("a space-time field needs at least one snapshot")]
    NoSnapshots,
    #[error("{times} times for {snapshots} snapshots")]
    SnapshotCountMismatch { times: usize, snapshots: usize },
}

/// Axis-aligned box `Π [lower_i, upper_i]`, convex by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxDomain {
    dim: usize,
    lower: Point,
    upper: Point,
}

impl BoxDomain {
    pub fn new(lower: &[f64], upper: &[f64]) -> Result<Self, MeshError> {
        let dim = lower.len();
        if !(1..=3).contains(&dim) || upper.len() != dim {
            return Err(MeshError::InvalidDimension(dim.max(upper.len())));
        }
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for axis in 0..dim {
            if !(lower[axis] < upper[axis]) {
                return Err(MeshError::InvertedBox { axis, lower: lower[axis], upper: upper[axis] });
            }
            lo[axis] = lower[axis];
            hi[axis] = upper[axis];
        }
        Ok(Self { dim, lower: lo, upper: hi })
    }

    /// `[0, 1]^dim`.
    pub fn unit(dim: usize) -> Result<Self, MeshError> {
        if !(1..=3).contains(&dim) {
            return Err(MeshError::InvalidDimension(dim));
        }
        Self::new(&[0.0; 3][..dim], &[1.0; 3][..dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower[..self.dim]
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper[..self.dim]
    }

    pub fn measure(&self) -> f64 {
        (0..self.dim).map(|i| self.upper[i] - self.lower[i]).product()
    }
}

/// A face of the box: the axis it is normal to and whether it is the upper
/// one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Face {
    pub axis: usize,
    pub upper: bool,
}

/// Uniform tensor grid on a box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    domain: BoxDomain,
    nodes: [usize; 3],
    spacing: [f64; 3],
}

impl Grid {
    pub fn new(domain: BoxDomain, nodes_per_axis: &[usize]) -> Result<Self, MeshError> {
        let dim = domain.dim();
        if nodes_per_axis.len() != dim {
            return Err(MeshError::InvalidDimension(nodes_per_axis.len()));
        }
        let mut nodes = [1; 3];
        let mut spacing = [0.0; 3];
        for axis in 0..dim {
            let n = nodes_per_axis[axis];
            if n < 3 {
                return Err(MeshError::TooFewNodes { axis, nodes: n });
            }
            nodes[axis] = n;
            spacing[axis] = (domain.upper[axis] - domain.lower[axis]) / (n - 1) as f64;
        }
        Ok(Self { domain, nodes, spacing })
    }

    /// Same node count along every axis.
    pub fn uniform(domain: BoxDomain, n: usize) -> Result<Self, MeshError> {
        Self::new(domain, &vec![n; domain.dim()])
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn nodes_per_axis(&self) -> &[usize] {
        &self.nodes[..self.dim()]
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing[..self.dim()]
    }

    pub fn h(&self, axis: usize) -> f64 {
        self.spacing[axis]
    }

    pub fn h_min(&self) -> f64 {
        self.spacing().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn h_max(&self) -> f64 {
        self.spacing().iter().copied().fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.nodes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major strides: the last axis varies fastest.
    pub fn strides(&self) -> [usize; 3] {
        [self.nodes[1] * self.nodes[2], self.nodes[2], 1]
    }

    pub fn index(&self, idx: [usize; 3]) -> usize {
        let s = self.strides();
        idx[0] * s[0] + idx[1] * s[1] + idx[2]
    }

    pub fn multi_index(&self, flat: usize) -> [usize; 3] {
        let s = self.strides();
        [flat / s[0], (flat % s[0]) / s[1], flat % s[1]]
    }

    pub fn coord(&self, idx: [usize; 3]) -> Point {
        let mut x = [0.0; 3];
        for axis in 0..self.dim() {
            x[axis] = self.domain.lower[axis] + idx[axis] as f64 * self.spacing[axis];
        }
        x
    }

    pub fn coord_flat(&self, flat: usize) -> Point {
        self.coord(self.multi_index(flat))
    }

    pub fn is_boundary(&self, idx: [usize; 3]) -> bool {
        (0..self.dim()).any(|a| idx[a] == 0 || idx[a] + 1 == self.nodes[a])
    }

    /// Composite trapezoid weights along one axis.
    pub fn axis_weights(&self, axis: usize) -> Vec<f64> {
        let n = self.nodes[axis];
        if axis >= self.dim() {
            return vec![1.0];
        }
        let h = self.spacing[axis];
        (0..n).map(|j| if j == 0 || j + 1 == n { 0.5 * h } else { h }).collect()
    }

    /// Tensor trapezoid weight of every node; they sum to the box measure.
    pub fn node_weights(&self) -> Vec<f64> {
        let w: [Vec<f64>; 3] = [self.axis_weights(0), self.axis_weights(1), self.axis_weights(2)];
        let mut out = Vec::with_capacity(self.len());
        for a in &w[0] {
            for b in &w[1] {
                for c in &w[2] {
                    out.push(a * b * c);
                }
            }
        }
        out
    }

    pub fn faces(&self) -> Vec<Face> {
        (0..self.dim()).flat_map(|axis| [Face { axis, upper: false }, Face { axis, upper: true }]).collect()
    }

    /// Nodes of a face with their (N−1)-dimensional trapezoid weights.
    pub fn face_nodes(&self, face: Face) -> Vec<(usize, f64)> {
        let fixed = if face.upper { self.nodes[face.axis] - 1 } else { 0 };
        let weights: Vec<Vec<f64>> = (0..3)
            .map(|a| if a == face.axis { vec![1.0] } else { self.axis_weights(a) })
            .collect();
        let mut out = Vec::new();
        for i in 0..self.nodes[0] {
            for j in 0..self.nodes[1] {
                for k in 0..self.nodes[2] {
                    let idx = [i, j, k];
                    if idx[face.axis] != fixed {
                        continue;
                    }
                    let mut w = 1.0;
                    for a in 0..3 {
                        let local = if a == face.axis { 0 } else { idx[a] };
                        w *= weights[a][local];
                    }
                    out.push((self.index(idx), w));
                }
            }
        }
        out
    }

    /// Grid on the box padded by one spacing per face.
    pub fn padded(&self) -> Grid {
        let dim = self.dim();
        let mut lo = self.domain.lower;
        let mut hi = self.domain.upper;
        let mut nodes = [1; 3];
        for axis in 0..dim {
            lo[axis] -= self.spacing[axis];
            hi[axis] += self.spacing[axis];
            nodes[axis] = self.nodes[axis] + 2;
        }
        Grid { domain: BoxDomain { dim, lower: lo, upper: hi }, nodes, spacing: self.spacing }
    }

    /// Node count doubled in intervals: `n → 2n − 1`; coarse nodes are kept.
    pub fn refined(&self) -> Grid {
        let counts: Vec<usize> = self.nodes_per_axis().iter().map(|n| 2 * n - 1).collect();
        Grid::new(self.domain, &counts).expect("refining a valid grid")
    }
}

/// Even reflection of an index about the boundary nodes `0` and `n − 1`.
#[inline]
pub fn mirror(i: isize, n: usize) -> usize {
    let last = n as isize - 1;
    if last == 0 {
        return 0;
    }
    if i < 0 {
        (-i) as usize
    } else if i > last {
        (2 * last - i) as usize
    } else {
        i as usize
    }
}

/// Scalar samples on every node of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, MeshError> {
        if values.len() != grid.len() {
            return Err(MeshError::LengthMismatch { expected: grid.len(), got: values.len() });
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self { grid, values: vec![value; grid.len()] }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(&Point) -> f64) -> Self {
        let values = (0..grid.len()).map(|k| f(&grid.coord_flat(k))).collect();
        Self { grid, values }
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

    pub fn at(&self, idx: [usize; 3]) -> f64 {
        self.values[self.grid.index(idx)]
    }

    /// Value at `idx + offset`, reflected back into the grid.
    #[inline]
    pub fn reflected(&self, idx: [usize; 3], offset: [isize; 3]) -> f64 {
        let n = &self.grid.nodes;
        let j = [
            mirror(idx[0] as isize + offset[0], n[0]),
            mirror(idx[1] as isize + offset[1], n[1]),
            mirror(idx[2] as isize + offset[2], n[2]),
        ];
        self.values[self.grid.index(j)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        crate::math::max_abs(&self.values)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Composite trapezoid integral over the box.
    pub fn integrate_space(&self) -> f64 {
        integrate_with(&self.grid, |k| self.values[k])
    }
}

/// Trapezoid quadrature of a per-node integrand.
pub fn integrate_with(grid: &Grid, integrand: impl Fn(usize) -> f64) -> f64 {
    let weights = grid.node_weights();
    let terms: Vec<f64> = weights.iter().enumerate().map(|(k, w)| w * integrand(k)).collect();
    pairwise_sum(&terms)
}

/// Face quadrature of a per-node integrand over the whole boundary.
pub fn integrate_boundary_with(grid: &Grid, integrand: impl Fn(usize, Face) -> f64) -> f64 {
    let mut terms = Vec::new();
    for face in grid.faces() {
        for (k, w) in grid.face_nodes(face) {
            terms.push(w * integrand(k, face));
        }
    }
    pairwise_sum(&terms)
}

/// Free-function form of [`ScalarField::integrate_space`].
pub fn integrate_space(field: &ScalarField) -> f64 {
    field.integrate_space()
}

/// Extends a field by one ghost layer per face with the even reflection
/// closure; the interior of the result is the input, bit for bit.
pub fn ghost_extend(field: &ScalarField) -> ScalarField {
    let grid = field.grid();
    let padded = grid.padded();
    let dim = grid.dim();
    let mut values = Vec::with_capacity(padded.len());
    for k in 0..padded.len() {
        let idx = padded.multi_index(k);
        let mut offset = [0isize; 3];
        let mut base = [0usize; 3];
        for axis in 0..dim {
            offset[axis] = idx[axis] as isize - 1;
        }
        base[dim..3].copy_from_slice(&idx[dim..3]);
        values.push(field.reflected(base, offset));
    }
    ScalarField { grid: padded, values }
}

/// Samples of a scalar field at increasing times starting from zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    grid: Grid,
    times: Vec<f64>,
    snapshots: Vec<ScalarField>,
    /// Number of solver steps between stored snapshots; `1` means every
    /// step was kept.
    stride: usize,
}

impl SpaceTimeField {
    pub fn new(times: Vec<f64>, snapshots: Vec<ScalarField>) -> Result<Self, MeshError> {
        let first = snapshots.first().ok_or(MeshError::NoSnapshots)?;
        let grid = *first.grid();
        if times.len() != snapshots.len() {
            return Err(MeshError::SnapshotCountMismatch { times: times.len(), snapshots: snapshots.len() });
        }
        if times[0] != 0.0 {
            return Err(MeshError::TimesNotStartingAtZero(times[0]));
        }
        for k in 1..times.len() {
            if !(times[k] > times[k - 1]) {
                return Err(MeshError::TimesNotIncreasing(k));
            }
        }
        if snapshots.iter().any(|s| *s.grid() != grid) {
            return Err(MeshError::GridMismatch);
        }
        Ok(Self { grid, times, snapshots, stride: 1 })
    }

    /// Samples a closed form `u(x, t)` at the given times.
    pub fn from_fn(grid: Grid, times: Vec<f64>, f: impl Fn(&Point, f64) -> f64) -> Result<Self, MeshError> {
        let snapshots = times.iter().map(|&t| ScalarField::from_fn(grid, |x| f(x, t))).collect();
        Self::new(times, snapshots)
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride.max(1);
        self
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn snapshots(&self) -> &[ScalarField] {
        &self.snapshots
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("non-empty")
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn last(&self) -> &ScalarField {
        self.snapshots.last().expect("non-empty")
    }

    /// Left-endpoint rectangle weights in time; the final snapshot closes
    /// the interval and carries no weight.
    pub fn time_weights(&self) -> Vec<f64> {
        left_rectangle_weights(&self.times)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            times: self.times.clone(),
            snapshots: self.snapshots.iter().map(|s| s.map(&f)).collect(),
            stride: self.stride,
        }
    }

    /// Like [`SpaceTimeField::map`] with the flat node index passed along.
    pub fn map_nodes(&self, f: impl Fn(usize, f64) -> f64) -> Self {
        let snapshots = self
            .snapshots
            .iter()
            .map(|s| ScalarField {
                grid: self.grid,
                values: s.values.iter().enumerate().map(|(k, &v)| f(k, v)).collect(),
            })
            .collect();
        Self { grid: self.grid, times: self.times.clone(), snapshots, stride: self.stride }
    }
}

pub fn left_rectangle_weights(times: &[f64]) -> Vec<f64> {
    let mut w: Vec<f64> = times.windows(2).map(|p| p[1] - p[0]).collect();
    w.push(0.0);
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{cos, PI};

    fn line(n: usize) -> Grid {
        Grid::uniform(BoxDomain::unit(1).unwrap(), n).unwrap()
    }

    #[test]
    fn ghost_extension_of_short_line() {
        let f = ScalarField::new(line(3), vec![1.0, 2.0, 3.0]).unwrap();
        let g = ghost_extend(&f);
        assert_eq!(g.values(), &[2.0, 1.0, 2.0, 3.0, 2.0]);
        assert_eq!(g.grid().nodes_per_axis(), &[5]);
        assert!((g.grid().domain().lower()[0] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn ghost_extension_of_constant() {
        let grid = Grid::uniform(BoxDomain::unit(2).unwrap(), 5).unwrap();
        let g = ghost_extend(&ScalarField::constant(grid, 4.5));
        assert!(g.values().iter().all(|&v| v == 4.5));
    }

    #[test]
    fn cosine_has_zero_normal_difference() {
        let grid = line(65);
        let f = ScalarField::from_fn(grid, |x| cos(PI * x[0]));
        let g = ghost_extend(&f);
        let n = g.values().len();
        let h = grid.h(0);
        let left = (g.values()[2] - g.values()[0]) / (2.0 * h);
        let right = (g.values()[n - 1] - g.values()[n - 3]) / (2.0 * h);
        assert_eq!(left, 0.0);
        assert_eq!(right, 0.0);
    }

    #[test]
    fn interior_restriction_is_identity() {
        let grid = Grid::new(BoxDomain::new(&[0.0, -1.0], &[2.0, 1.0]).unwrap(), &[4, 6]).unwrap();
        let f = ScalarField::from_fn(grid, |x| x[0] * 3.0 - x[1] * x[1]);
        let g = ghost_extend(&f);
        for i in 0..4 {
            for j in 0..6 {
                assert_eq!(g.at([i + 1, j + 1, 0]), f.at([i, j, 0]));
            }
        }
    }

    #[test]
    fn trapezoid_examples() {
        let square = Grid::uniform(BoxDomain::unit(2).unwrap(), 9).unwrap();
        assert!((ScalarField::constant(square, 1.0).integrate_space() - 1.0).abs() < 1e-15);
        for n in [3, 4, 17] {
            let f = ScalarField::from_fn(line(n), |x| x[0]);
            assert!((f.integrate_space() - 0.5).abs() < 1e-15);
        }
        let f = ScalarField::from_fn(line(129), |x| x[0] * x[0]);
        assert!((f.integrate_space() - 1.0 / 3.0).abs() < 1e-4);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(BoxDomain::new(&[1.0], &[0.0]), Err(MeshError::InvertedBox { .. })));
        let d = BoxDomain::unit(2).unwrap();
        assert!(matches!(Grid::new(d, &[2, 5]), Err(MeshError::TooFewNodes { axis: 0, .. })));
        assert!(BoxDomain::unit(4).is_err());
        assert!(ScalarField::new(line(3), vec![0.0; 4]).is_err());
    }

    #[test]
    fn face_weights_cover_the_boundary() {
        let grid = Grid::new(BoxDomain::new(&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0]).unwrap(), &[3, 5, 4]).unwrap();
        let area: f64 = integrate_boundary_with(&grid, |_, _| 1.0);
        assert!((area - 2.0 * (2.0 + 3.0 + 6.0)).abs() < 1e-12);
        let line_faces = integrate_boundary_with(&line(5), |_, _| 1.0);
        assert_eq!(line_faces, 2.0);
    }

    #[test]
    fn space_time_validation() {
        let g = line(3);
        let s = ScalarField::constant(g, 0.0);
        assert!(SpaceTimeField::new(vec![0.0, 0.5], vec![s.clone(), s.clone()]).is_ok());
        assert!(matches!(
            SpaceTimeField::new(vec![0.1, 0.5], vec![s.clone(), s.clone()]),
            Err(MeshError::TimesNotStartingAtZero(_))
        ));
        assert!(matches!(
            SpaceTimeField::new(vec![0.0, 0.0], vec![s.clone(), s.clone()]),
            Err(MeshError::TimesNotIncreasing(1))
        ));
        let other = ScalarField::constant(line(5), 0.0);
        assert!(matches!(SpaceTimeField::new(vec![0.0, 1.0], vec![s, other]), Err(MeshError::GridMismatch)));
    }
}
