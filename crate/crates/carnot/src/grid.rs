//! Truncated-box discretization of functions on a graded group.
//!
//! The box is `|x_i| ≤ R^{d_i}`. Each axis is split into `m_i` equal cells and
//! the nodes sit at the cell centres, so `spacing · points` spans the box and
//! the rectangle rule integrates constants exactly. With an odd number of
//! points the identity element is a node and dyadic dilations map nodes to
//! nodes.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{GroupDoc, GroupSpec, MultiIndex};

/// Geometry of the coordinate box and its node lattice.
#[derive(Clone, Debug)]
pub struct GridSpec {
    group: GroupSpec,
    half_width: f64,
    points: Vec<usize>,
    spacing: Vec<f64>,
    extent: Vec<f64>,
    strides: Vec<usize>,
    len: usize,
    volume_element: f64,
}

impl PartialEq for GridSpec {
    fn eq(&self, other: &Self) -> bool {
        self.group == other.group
            && self.half_width == other.half_width
            && self.points == other.points
    }
}

/// Serialized form of a grid (the `.gfn` header).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridDoc {
    pub group: GroupDoc,
    pub half_width: f64,
    pub points_per_axis: Vec<usize>,
}

impl GridSpec {
    pub fn new(group: GroupSpec, half_width: f64, points: Vec<usize>) -> Result<Self> {
        let n = group.dim();
        if points.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: points.len(),
            });
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "half width must be positive, got {half_width}"
            )));
        }
        if let Some(m) = points.iter().find(|&&m| m < 4) {
            return Err(Error::InvalidGrid(format!(
                "at least 4 points per axis required, got {m}"
            )));
        }
        let extent: Vec<f64> = group
            .weights()
            .iter()
            .map(|&d| half_width.powi(d as i32))
            .collect();
        let spacing: Vec<f64> = extent
            .iter()
            .zip(&points)
            .map(|(e, &m)| 2.0 * e / m as f64)
            .collect();
        let mut strides = vec![1; n];
        for k in (0..n.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * points[k + 1];
        }
        let len = points.iter().product();
        let volume_element = spacing.iter().product();
        Ok(GridSpec {
            group,
            half_width,
            points,
            spacing,
            extent,
            strides,
            len,
            volume_element,
        })
    }

    /// Same number of points on every axis.
    pub fn uniform(group: GroupSpec, half_width: f64, points: usize) -> Result<Self> {
        let n = group.dim();
        Self::new(group, half_width, vec![points; n])
    }

    pub fn from_doc(doc: &GridDoc) -> Result<Self> {
        Self::new(
            GroupSpec::from_doc(&doc.group)?,
            doc.half_width,
            doc.points_per_axis.clone(),
        )
    }

    pub fn to_doc(&self) -> GridDoc {
        GridDoc {
            group: self.group.to_doc(),
            half_width: self.half_width,
            points_per_axis: self.points.clone(),
        }
    }

    pub fn group(&self) -> &GroupSpec {
        &self.group
    }

    pub fn dim(&self) -> usize {
        self.points.len()
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Half extent `R^{d_i}` of each axis.
    pub fn extent(&self) -> &[f64] {
        &self.extent
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn volume_element(&self) -> f64 {
        self.volume_element
    }

    pub fn box_volume(&self) -> f64 {
        self.extent.iter().map(|e| 2.0 * e).product()
    }

    /// Coordinate of node `i` along `axis`.
    #[inline]
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        -self.extent[axis] + (i as f64 + 0.5) * self.spacing[axis]
    }

    /// Node coordinates of every grid point along `axis`.
    pub fn axis_nodes(&self, axis: usize) -> Vec<f64> {
        (0..self.points[axis])
            .map(|i| self.coord(axis, i))
            .collect()
    }

    pub fn unravel(&self, mut lin: usize, idx: &mut [usize]) {
        for k in 0..self.dim() {
            idx[k] = lin / self.strides[k];
            lin %= self.strides[k];
        }
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    /// Coordinates of the node with linear index `lin`.
    pub fn node_into(&self, lin: usize, x: &mut [f64]) {
        let mut rem = lin;
        for k in 0..self.dim() {
            let i = rem / self.strides[k];
            rem %= self.strides[k];
            x[k] = self.coord(k, i);
        }
    }

    pub fn node(&self, lin: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.node_into(lin, &mut x);
        x
    }

    /// All node coordinates, one vector per axis, in linear order.
    pub fn coordinate_columns(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut cols = vec![Vec::with_capacity(self.len); n];
        let mut x = vec![0.0; n];
        for lin in 0..self.len {
            self.node_into(lin, &mut x);
            for k in 0..n {
                cols[k].push(x[k]);
            }
        }
        cols
    }

    /// Linear index of the identity element when it is a node.
    pub fn origin_index(&self) -> Option<usize> {
        if self.points.iter().all(|m| m % 2 == 1) {
            let idx: Vec<usize> = self.points.iter().map(|m| m / 2).collect();
            Some(self.ravel(&idx))
        } else {
            None
        }
    }

    /// Whether `x` lies in the box shrunk by the relative `band` on every axis.
    pub fn in_interior(&self, x: &[f64], band: f64) -> bool {
        x.iter()
            .zip(&self.extent)
            .all(|(v, e)| v.abs() <= (1.0 - band) * e)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.in_interior(x, 0.0)
    }

    /// Grid with the same point counts and half width scaled by `factor`.
    pub fn rescaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.group.clone(),
            self.half_width * factor,
            self.points.clone(),
        )
    }

    /// Fractional node index of coordinate `v` on `axis`.
    #[inline]
    pub fn fractional_index(&self, axis: usize, v: f64) -> f64 {
        (v + self.extent[axis]) / self.spacing[axis] - 0.5
    }

    /// Multilinear interpolation stencil of `x`: corners are returned as
    /// `(linear index, weight)` through `visit`. Corners outside the node
    /// range carry zero weight and are skipped (zero extension).
    pub fn stencil<F: FnMut(usize, f64)>(&self, x: &[f64], mut visit: F) {
        let n = self.dim();
        debug_assert!(n <= 16);
        let mut base = [0isize; 16];
        let mut frac = [0f64; 16];
        let mut active = [0usize; 16];
        let mut na = 0;
        for k in 0..n {
            let u = self.fractional_index(k, x[k]);
            let f = u.floor();
            let mut t = u - f;
            let mut b = f as isize;
            if t < 1e-12 {
                t = 0.0;
            } else if t > 1.0 - 1e-12 {
                t = 0.0;
                b += 1;
            }
            let m = self.points[k] as isize;
            if t == 0.0 {
                if b < 0 || b >= m {
                    return;
                }
            } else {
                if b < -1 || b >= m {
                    return;
                }
                active[na] = k;
                na += 1;
            }
            base[k] = b;
            frac[k] = t;
        }
        'corner: for mask in 0..(1usize << na) {
            let mut w = 1.0;
            let mut lin = 0usize;
            let mut bit = 0;
            for k in 0..n {
                let mut i = base[k];
                if bit < na && active[bit] == k {
                    if mask >> bit & 1 == 1 {
                        i += 1;
                        w *= frac[k];
                    } else {
                        w *= 1.0 - frac[k];
                    }
                    bit += 1;
                }
                if i < 0 || i >= self.points[k] as isize {
                    continue 'corner;
                }
                lin += i as usize * self.strides[k];
            }
            if w != 0.0 {
                visit(lin, w);
            }
        }
    }
}

/// Complex samples of a function on a grid.
#[derive(Clone, Debug)]
pub struct GridFunction {
    grid: Arc<GridSpec>,
    values: Vec<Complex64>,
}

impl GridFunction {
    pub fn new(grid: Arc<GridSpec>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values
            .iter()
            .position(|v| !v.re.is_finite() || !v.im.is_finite())
        {
            return Err(Error::NonFiniteValue(i));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn from_real(grid: Arc<GridSpec>, values: &[f64]) -> Result<Self> {
        Self::new(
            grid,
            values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        )
    }

    pub fn zeros(grid: Arc<GridSpec>) -> Self {
        let n = grid.len();
        GridFunction {
            grid,
            values: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    /// Discrete delta at node `lin`, scaled by `1/volume_element` so that
    /// it integrates to one.
    pub fn delta(grid: Arc<GridSpec>, lin: usize) -> Self {
        let mut f = Self::zeros(grid);
        f.values[lin] = Complex64::new(1.0 / f.grid.volume_element(), 0.0);
        f
    }

    pub(crate) fn from_parts(grid: Arc<GridSpec>, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        GridFunction { grid, values }
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn re(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn same_grid(&self, other: &GridFunction) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn map<F: Fn(Complex64) -> Complex64>(&self, f: F) -> Self {
        Self::from_parts(
            self.grid.clone(),
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn add(&self, other: &GridFunction) -> Result<Self> {
        self.same_grid(other)?;
        Ok(Self::from_parts(
            self.grid.clone(),
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        ))
    }

    pub fn sub(&self, other: &GridFunction) -> Result<Self> {
        self.same_grid(other)?;
        Ok(Self::from_parts(
            self.grid.clone(),
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        ))
    }

    /// `self += s · other`.
    pub fn axpy(&mut self, s: Complex64, other: &GridFunction) -> Result<()> {
        self.same_grid(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += s * b;
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn max_imag(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.im.abs()))
    }

    /// Multilinear interpolation at an arbitrary point, zero outside the box.
    pub fn interpolate(&self, x: &[f64]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        self.grid.stencil(x, |lin, w| acc += self.values[lin] * w);
        acc
    }

    /// Value at the node nearest to `x` (no interpolation).
    pub fn value_at_node(&self, idx: &[usize]) -> Complex64 {
        self.values[self.grid.ravel(idx)]
    }

    /// Rectangle-rule integral.
    pub fn integrate(&self) -> Complex64 {
        self.values.iter().sum::<Complex64>() * self.grid.volume_element()
    }

    /// `⟨f, g⟩ = ∫ f conj(g)`.
    pub fn inner(&self, other: &GridFunction) -> Result<Complex64> {
        self.same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b.conj())
            .sum::<Complex64>()
            * self.grid.volume_element())
    }

    /// Quadrature `L^p` norm; `p = f64::INFINITY` is the max modulus.
    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.max_abs();
        }
        let dv = self.grid.volume_element();
        if p == 2.0 {
            return (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * dv).sqrt();
        }
        if p == 1.0 {
            return self.values.iter().map(|v| v.norm()).sum::<f64>() * dv;
        }
        (self.values.iter().map(|v| v.norm().powf(p)).sum::<f64>() * dv).powf(1.0 / p)
    }

    /// `∫ f(x) x^I dx`.
    pub fn moment(&self, index: &MultiIndex) -> Complex64 {
        let n = self.grid.dim();
        let mut x = vec![0.0; n];
        let mut acc = Complex64::new(0.0, 0.0);
        for (lin, v) in self.values.iter().enumerate() {
            self.grid.node_into(lin, &mut x);
            let mono: f64 = x
                .iter()
                .zip(&index.exponents)
                .map(|(&c, &e)| c.powi(e as i32))
                .product();
            acc += v * mono;
        }
        acc * self.grid.volume_element()
    }

    /// `f^*(x) = conj(f(x^{-1})) = conj(f(-x))`; on the symmetric node
    /// lattice this is an index reversal.
    pub fn involution(&self) -> Self {
        let len = self.values.len();
        Self::from_parts(
            self.grid.clone(),
            (0..len).map(|i| self.values[len - 1 - i].conj()).collect(),
        )
    }

    /// `D_a f(x) = a^Q f(δ_a x)` by multilinear interpolation.
    pub fn dilate(&self, a: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::NonPositiveScale(a));
        }
        let g = &self.grid;
        let q = g.group().homogeneous_dim() as i32;
        let aq = a.powi(q);
        let n = g.dim();
        let values: Vec<Complex64> = (0..g.len())
            .into_par_iter()
            .map_init(
                || (vec![0.0; n], vec![0.0; n]),
                |(x, y), lin| {
                    g.node_into(lin, x);
                    g.group().dilate_into(a, x, y);
                    self.interpolate(y) * aq
                },
            )
            .collect();
        Ok(Self::from_parts(g.clone(), values))
    }

    /// `D_a f` sampled on the nodes of another grid over the same group.
    pub fn dilate_onto(&self, a: f64, target: &Arc<GridSpec>) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::NonPositiveScale(a));
        }
        if target.group() != self.grid.group() {
            return Err(Error::GridMismatch);
        }
        let q = target.group().homogeneous_dim() as i32;
        let aq = a.powi(q);
        let n = target.dim();
        let values: Vec<Complex64> = (0..target.len())
            .into_par_iter()
            .map_init(
                || (vec![0.0; n], vec![0.0; n]),
                |(x, y), lin| {
                    target.node_into(lin, x);
                    target.group().dilate_into(a, x, y);
                    self.interpolate(y) * aq
                },
            )
            .collect();
        Ok(Self::from_parts(target.clone(), values))
    }

    /// `f ∘ δ_a` (no mass normalisation).
    pub fn compose_dilation(&self, a: f64) -> Result<Self> {
        let q = self.grid.group().homogeneous_dim() as i32;
        Ok(self.dilate(a)?.scale(a.powi(-q)))
    }

    /// Left translate `x ↦ f(y^{-1} x)` by multilinear interpolation.
    pub fn left_translate(&self, y: &[f64]) -> Self {
        let g = &self.grid;
        let n = g.dim();
        let yinv = g.group().inverse(y);
        let values: Vec<Complex64> = (0..g.len())
            .into_par_iter()
            .map_init(
                || (vec![0.0; n], vec![0.0; n]),
                |(x, z), lin| {
                    g.node_into(lin, x);
                    g.group().product_into(&yinv, x, z);
                    self.interpolate(z)
                },
            )
            .collect();
        Self::from_parts(g.clone(), values)
    }

    /// Pointwise sup of `|f(x) - f(x y^{-1})|` over `y` in the quasi-ball of
    /// radius `r`: every grid node inside the ball plus the `2n` axis
    /// extremes `±r^{d_i} e_i`.
    pub fn osc(&self, r: f64) -> Self {
        let g = &self.grid;
        let grp = g.group();
        let n = g.dim();
        let mut shell: Vec<Vec<f64>> = Vec::new();
        // The ball fits into the coordinate box |y_i| ≤ r^{d_i}; nodes are
        // enumerated only in that sub-box.
        let ranges: Vec<(isize, isize)> = (0..n)
            .map(|k| {
                let e = r.powi(grp.weights()[k] as i32);
                let lo = (g.fractional_index(k, -e).ceil() as isize).max(0);
                let hi =
                    (g.fractional_index(k, e).floor() as isize).min(g.points()[k] as isize - 1);
                (lo, hi)
            })
            .collect();
        if ranges.iter().all(|(lo, hi)| lo <= hi) {
            let counts: Vec<usize> = ranges
                .iter()
                .map(|(lo, hi)| (hi - lo + 1) as usize)
                .collect();
            let total: usize = counts.iter().product();
            let mut y = vec![0.0; n];
            for mut c in 0..total {
                for k in (0..n).rev() {
                    let i = ranges[k].0 as usize + c % counts[k];
                    c /= counts[k];
                    y[k] = g.coord(k, i);
                }
                if grp.quasi_norm(&y) <= r && y.iter().any(|v| *v != 0.0) {
                    shell.push(y.clone());
                }
            }
        }
        for k in 0..n {
            for s in [-1.0, 1.0] {
                let mut y = vec![0.0; n];
                y[k] = s * r.powi(grp.weights()[k] as i32);
                shell.push(y);
            }
        }
        let inv: Vec<Vec<f64>> = shell.iter().map(|y| grp.inverse(y)).collect();
        let values: Vec<Complex64> = (0..g.len())
            .into_par_iter()
            .map_init(
                || (vec![0.0; n], vec![0.0; n]),
                |(x, z), lin| {
                    g.node_into(lin, x);
                    let fx = self.values[lin];
                    let mut best = 0.0f64;
                    for yi in &inv {
                        grp.product_into(x, yi, z);
                        best = best.max((fx - self.interpolate(z)).norm());
                    }
                    Complex64::new(best, 0.0)
                },
            )
            .collect();
        Self::from_parts(g.clone(), values)
    }
}

/// Samples a pointwise evaluator at every node.
pub fn sample<F>(grid: &Arc<GridSpec>, field: F) -> Result<GridFunction>
where
    F: Fn(&[f64]) -> Complex64 + Sync,
{
    let n = grid.dim();
    let values: Vec<Complex64> = (0..grid.len())
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |x, lin| {
                grid.node_into(lin, x);
                field(x)
            },
        )
        .collect();
    GridFunction::new(grid.clone(), values)
}

/// Real-valued convenience wrapper around [`sample`].
pub fn sample_real<F>(grid: &Arc<GridSpec>, field: F) -> Result<GridFunction>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    sample(grid, |x| Complex64::new(field(x), 0.0))
}

/// Group convolution `(f ∗ g)(x) = ∫ f(y) g(y^{-1} x) dy` by quadrature over
/// the nodes `y`, with `g` interpolated multilinearly off the grid.
pub fn convolve(f: &GridFunction, g: &GridFunction) -> Result<GridFunction> {
    f.same_grid(g)?;
    convolve_extended(f, g)
}

/// [`convolve`] with the kernel `g` tabulated on its own grid of the same
/// group, typically a larger box so that every difference `y^{-1} x` of two
/// nodes of `f` is covered.
pub fn convolve_extended(f: &GridFunction, g: &GridFunction) -> Result<GridFunction> {
    if f.grid().group() != g.grid().group() {
        return Err(Error::GridMismatch);
    }
    let grid = f.grid();
    let grp = grid.group();
    let n = grid.dim();
    let dv = grid.volume_element();
    let support: Vec<(Vec<f64>, Complex64)> = f
        .values()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.norm_sqr() > 0.0)
        .map(|(lin, &v)| (grp.inverse(&grid.node(lin)), v))
        .collect();
    let values: Vec<Complex64> = (0..grid.len())
        .into_par_iter()
        .map_init(
            || (vec![0.0; n], vec![0.0; n]),
            |(x, z), lin| {
                grid.node_into(lin, x);
                let mut acc = Complex64::new(0.0, 0.0);
                for (yinv, fy) in &support {
                    grp.product_into(yinv, x, z);
                    acc += fy * g.interpolate(z);
                }
                acc * dv
            },
        )
        .collect();
    Ok(GridFunction::from_parts(grid.clone(), values))
}

/// Single output value of [`convolve`] by an explicit double loop; used to
/// audit the parallel kernel.
pub fn convolve_at(f: &GridFunction, g: &GridFunction, lin: usize) -> Result<Complex64> {
    f.same_grid(g)?;
    let grid = f.grid();
    let grp = grid.group();
    let x = grid.node(lin);
    let mut acc = Complex64::new(0.0, 0.0);
    for (ylin, fy) in f.values().iter().enumerate() {
        let y = grid.node(ylin);
        let z = grp.product(&grp.inverse(&y), &x)?;
        acc += fy * g.interpolate(&z);
    }
    Ok(acc * grid.volume_element())
}

/// `∫ osc_r(K)`.
pub fn osc_l1(k: &GridFunction, r: f64) -> f64 {
    k.osc(r).integrate().re
}
