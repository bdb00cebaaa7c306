//! Node-centered structured grids, the boundary-aware five-point stencil and
//! the discrete norms built on top of it.
//!
//! Storage is row-major with `x` fastest: node `(i, j)` lives at `j * nx + i`,
//! so one stored row is one line of constant `y`.
//!
//! Edge conditions:
//! * `Periodic` wraps to the opposite edge; opposite edges must agree.
//! * `DirichletZero` pins the boundary line of nodes to zero. Those nodes are
//!   constrained: stencil outputs there are zero, and neighbours read them as
//!   zero whatever value is stored.
//! * `NeumannZero` uses a ghost equal to the boundary node itself, so the flux
//!   through the outer half-cell face vanishes. This keeps the stencil
//!   symmetric under the uniform `h^2 * sum` inner product.
//!
//! Every reduction sums each row sequentially, then sums the row partials in
//! row order. Rows may be evaluated on any number of threads without changing
//! a single bit of the result.

use rayon::prelude::*;

use crate::error::{Result, SbdfError};

/// Boundary condition on one edge of the rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeCondition {
    Periodic,
    DirichletZero,
    NeumannZero,
}

impl EdgeCondition {
    fn code(self) -> u32 {
        match self {
            EdgeCondition::Periodic => 0,
            EdgeCondition::DirichletZero => 1,
            EdgeCondition::NeumannZero => 2,
        }
    }

    fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(EdgeCondition::Periodic),
            1 => Some(EdgeCondition::DirichletZero),
            2 => Some(EdgeCondition::NeumannZero),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EdgeCondition::Periodic => "periodic",
            EdgeCondition::DirichletZero => "dirichlet",
            EdgeCondition::NeumannZero => "neumann",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "periodic" => Some(EdgeCondition::Periodic),
            "dirichlet" | "dirichlet0" | "dirichlet_zero" => Some(EdgeCondition::DirichletZero),
            "neumann" | "neumann0" | "neumann_zero" => Some(EdgeCondition::NeumannZero),
            _ => None,
        }
    }
}

/// Per-edge boundary conditions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BoundarySpec {
    pub left: EdgeCondition,
    pub right: EdgeCondition,
    pub bottom: EdgeCondition,
    pub top: EdgeCondition,
}

impl BoundarySpec {
    pub const fn uniform(edge: EdgeCondition) -> Self {
        Self {
            left: edge,
            right: edge,
            bottom: edge,
            top: edge,
        }
    }

    pub const fn periodic() -> Self {
        Self::uniform(EdgeCondition::Periodic)
    }

    pub const fn neumann() -> Self {
        Self::uniform(EdgeCondition::NeumannZero)
    }

    pub const fn dirichlet() -> Self {
        Self::uniform(EdgeCondition::DirichletZero)
    }

    /// Zero Dirichlet on the left edge, zero Neumann elsewhere.
    pub const fn dirichlet_left() -> Self {
        Self {
            left: EdgeCondition::DirichletZero,
            right: EdgeCondition::NeumannZero,
            bottom: EdgeCondition::NeumannZero,
            top: EdgeCondition::NeumannZero,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let x_periodic = [self.left, self.right].map(|e| e == EdgeCondition::Periodic);
        let y_periodic = [self.bottom, self.top].map(|e| e == EdgeCondition::Periodic);
        if x_periodic[0] != x_periodic[1] {
            return Err(SbdfError::InvalidGrid(
                "left/right edges: periodic must be paired".into(),
            ));
        }
        if y_periodic[0] != y_periodic[1] {
            return Err(SbdfError::InvalidGrid(
                "bottom/top edges: periodic must be paired".into(),
            ));
        }
        Ok(())
    }

    /// Packs the four edges into 2-bit fields: left, right, bottom, top from
    /// the least significant end.
    pub fn code(&self) -> u32 {
        self.left.code()
            | self.right.code() << 2
            | self.bottom.code() << 4
            | self.top.code() << 6
    }

    pub fn from_code(code: u32) -> Result<Self> {
        if code >> 8 != 0 {
            return Err(SbdfError::InvalidGrid(format!(
                "boundary code {code:#x} has bits above the four edge fields"
            )));
        }
        let edge = |shift: u32| {
            EdgeCondition::from_code((code >> shift) & 0b11).ok_or_else(|| {
                SbdfError::InvalidGrid(format!("boundary code {code:#x}: bad edge field"))
            })
        };
        let bc = Self {
            left: edge(0)?,
            right: edge(2)?,
            bottom: edge(4)?,
            top: edge(6)?,
        };
        bc.validate()?;
        Ok(bc)
    }

    pub fn is_periodic_x(&self) -> bool {
        self.left == EdgeCondition::Periodic
    }

    pub fn is_periodic_y(&self) -> bool {
        self.bottom == EdgeCondition::Periodic
    }
}

#[derive(Clone, Copy, Debug)]
struct Axis {
    n: usize,
    lo: EdgeCondition,
    hi: EdgeCondition,
}

impl Axis {
    #[inline]
    fn fixed(&self, i: usize) -> bool {
        (i == 0 && self.lo == EdgeCondition::DirichletZero)
            || (i + 1 == self.n && self.hi == EdgeCondition::DirichletZero)
    }

    #[inline]
    fn prev(&self, i: usize) -> Option<usize> {
        if i > 0 {
            return Some(i - 1);
        }
        match self.lo {
            EdgeCondition::Periodic => Some(self.n - 1),
            EdgeCondition::NeumannZero => Some(0),
            EdgeCondition::DirichletZero => None,
        }
    }

    #[inline]
    fn next(&self, i: usize) -> Option<usize> {
        if i + 1 < self.n {
            return Some(i + 1);
        }
        match self.hi {
            EdgeCondition::Periodic => Some(0),
            EdgeCondition::NeumannZero => Some(i),
            EdgeCondition::DirichletZero => None,
        }
    }

    /// Forward edge from `i`, skipping Neumann self-edges whose difference is
    /// identically zero.
    #[inline]
    fn forward_edge(&self, i: usize) -> Option<usize> {
        self.next(i).filter(|&n| n != i)
    }
}

/// Uniform node-centered grid: `nx * ny` nodes with spacing `h` in both
/// directions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    nx: usize,
    ny: usize,
    h: f64,
    bc: BoundarySpec,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, h: f64, bc: BoundarySpec) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(SbdfError::InvalidGrid(format!(
                "need at least 2 nodes per direction, got {nx}x{ny}"
            )));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(SbdfError::InvalidGrid(format!("spacing must be positive, got {h}")));
        }
        bc.validate()?;
        Ok(Self { nx, ny, h, bc })
    }

    /// Square `n x n` grid covering `[0, length]^2`. Periodic directions place
    /// `n` nodes per period (`h = length / n`); bounded directions put nodes on
    /// both ends (`h = length / (n - 1)`). Both directions must agree.
    pub fn square(n: usize, length: f64, bc: BoundarySpec) -> Result<Self> {
        if bc.is_periodic_x() != bc.is_periodic_y() {
            return Err(SbdfError::InvalidGrid(
                "square grid needs both or neither direction periodic".into(),
            ));
        }
        if n < 2 {
            return Err(SbdfError::InvalidGrid(format!("need n >= 2, got {n}")));
        }
        let h = if bc.is_periodic_x() {
            length / n as f64
        } else {
            length / (n - 1) as f64
        };
        Self::new(n, n, h, bc)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn bc(&self) -> BoundarySpec {
        self.bc
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Coordinate of node index `i` along either axis, measured from the
    /// lower-left node.
    pub fn coord(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    /// Same grid with a different boundary specification.
    pub fn with_bc(&self, bc: BoundarySpec) -> Result<Self> {
        Self::new(self.nx, self.ny, self.h, bc)
    }

    fn x_axis(&self) -> Axis {
        Axis {
            n: self.nx,
            lo: self.bc.left,
            hi: self.bc.right,
        }
    }

    fn y_axis(&self) -> Axis {
        Axis {
            n: self.ny,
            lo: self.bc.bottom,
            hi: self.bc.top,
        }
    }

    /// True for nodes pinned by a Dirichlet edge.
    #[inline]
    pub fn is_constrained(&self, i: usize, j: usize) -> bool {
        self.x_axis().fixed(i) || self.y_axis().fixed(j)
    }

    /// Number of evolved (unconstrained) nodes.
    pub fn unknown_count(&self) -> usize {
        let x = self.x_axis();
        let y = self.y_axis();
        let free_x = (0..self.nx).filter(|&i| !x.fixed(i)).count();
        let free_y = (0..self.ny).filter(|&j| !y.fixed(j)).count();
        free_x * free_y
    }

    /// Row-major indices of the evolved nodes, in storage order.
    pub fn unknown_indices(&self) -> Vec<usize> {
        (0..self.ny)
            .flat_map(|j| (0..self.nx).map(move |i| (i, j)))
            .filter(|&(i, j)| !self.is_constrained(i, j))
            .map(|(i, j)| self.index(i, j))
            .collect()
    }

    /// Stencil neighbours of an evolved node as row-major indices, four
    /// entries; `None` marks a neighbour that reads as zero.
    pub fn stencil_neighbors(&self, i: usize, j: usize) -> [Option<usize>; 4] {
        let x = self.x_axis();
        let y = self.y_axis();
        let pick = |ii: Option<usize>, jj: Option<usize>| match (ii, jj) {
            (Some(ii), Some(jj)) if !x.fixed(ii) && !y.fixed(jj) => Some(self.index(ii, jj)),
            _ => None,
        };
        [
            pick(x.prev(i), Some(j)),
            pick(x.next(i), Some(j)),
            pick(Some(i), y.prev(j)),
            pick(Some(i), y.next(j)),
        ]
    }

    /// Neighbour sum over one stored row. Constrained outputs are zero.
    pub(crate) fn neighbor_sum_row(&self, u: &[f64], j: usize, out: &mut [f64]) {
        let x = self.x_axis();
        let y = self.y_axis();
        let nx = self.nx;
        if y.fixed(j) {
            out.fill(0.0);
            return;
        }
        let row_of = |jj: Option<usize>| -> Option<&[f64]> {
            let jj = jj.expect("evolved row has both vertical neighbours");
            (!y.fixed(jj)).then(|| &u[jj * nx..(jj + 1) * nx])
        };
        let below = row_of(y.prev(j));
        let above = row_of(y.next(j));
        let row = &u[j * nx..(j + 1) * nx];
        let read = |ii: Option<usize>| -> f64 {
            let ii = ii.expect("evolved node has both horizontal neighbours");
            if x.fixed(ii) {
                0.0
            } else {
                row[ii]
            }
        };
        for (i, o) in out.iter_mut().enumerate() {
            if x.fixed(i) {
                *o = 0.0;
                continue;
            }
            let vertical = below.map_or(0.0, |r| r[i]) + above.map_or(0.0, |r| r[i]);
            *o = read(x.prev(i)) + read(x.next(i)) + vertical;
        }
    }

    /// Row-parallel map into `out`, one closure call per stored row.
    pub(crate) fn par_rows<F>(&self, out: &mut [f64], f: F)
    where
        F: Fn(usize, &mut [f64]) + Sync + Send,
    {
        out.par_chunks_mut(self.nx)
            .enumerate()
            .for_each(|(j, row)| f(j, row));
    }

    /// Deterministic reduction: sequential within each row, rows summed in
    /// order.
    pub(crate) fn reduce_rows<F>(&self, f: F) -> f64
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        let partials: Vec<f64> = (0..self.ny).into_par_iter().map(f).collect();
        partials.iter().sum()
    }

    /// Value of `u` at `(i, j)` as seen by the stencil.
    #[inline]
    fn stencil_value(&self, u: &[f64], i: usize, j: usize) -> f64 {
        if self.is_constrained(i, j) {
            0.0
        } else {
            u[self.index(i, j)]
        }
    }

    /// Sum over stencil edges of `(u_a - u_b) (v_a - v_b)` for one row: the
    /// horizontal edges leaving row `j` and the vertical edges from row `j`
    /// to the row above.
    fn grad_row(&self, u: &[f64], v: &[f64], j: usize) -> f64 {
        let x = self.x_axis();
        let y = self.y_axis();
        let mut acc = 0.0;
        for i in 0..self.nx {
            let (ua, va) = (self.stencil_value(u, i, j), self.stencil_value(v, i, j));
            if let Some(ii) = x.forward_edge(i) {
                let du = ua - self.stencil_value(u, ii, j);
                let dv = va - self.stencil_value(v, ii, j);
                acc += du * dv;
            }
            if let Some(jj) = y.forward_edge(j) {
                let du = ua - self.stencil_value(u, i, jj);
                let dv = va - self.stencil_value(v, i, jj);
                acc += du * dv;
            }
        }
        acc
    }
}

/// Real grid function on a [`GridSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: GridSpec,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_fn(grid: GridSpec, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                values.push(f(i, j));
            }
        }
        Self { grid, values }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(SbdfError::GridMismatch(format!(
                "{} values for a {}x{} grid",
                values.len(),
                grid.nx,
                grid.ny
            )));
        }
        let field = Self { grid, values };
        field.check_finite("field construction")?;
        Ok(field)
    }

    pub fn grid(&self) -> &GridSpec {
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

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.grid.index(i, j);
        self.values[k] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Writes zero into every Dirichlet-pinned node.
    pub fn zero_constrained(&mut self) {
        let g = self.grid;
        for j in 0..g.ny {
            for i in 0..g.nx {
                if g.is_constrained(i, j) {
                    self.values[g.index(i, j)] = 0.0;
                }
            }
        }
    }

    pub fn check_finite(&self, context: &'static str) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(k) => Err(SbdfError::NonFinite {
                context,
                i: k % self.grid.nx,
                j: k / self.grid.nx,
                value: self.values[k],
            }),
        }
    }

    pub fn ensure_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(SbdfError::GridMismatch(format!(
                "{:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        Ok(())
    }

    /// `sum_k c_k * f_k` over fields sharing one grid.
    pub fn linear_combination(terms: &[(f64, &Field)]) -> Result<Field> {
        let (_, first) = terms.first().ok_or_else(|| SbdfError::InvalidParameter {
            name: "terms",
            reason: "empty linear combination".into(),
        })?;
        let mut out = Field::zeros(first.grid);
        for (c, f) in terms {
            first.ensure_same_grid(f)?;
            for (o, v) in out.values.iter_mut().zip(&f.values) {
                *o += c * v;
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        Field::linear_combination(&[(1.0, self), (-1.0, other)])
    }

    pub fn max_abs_diff(&self, other: &Field) -> Result<f64> {
        self.ensure_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs())))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Sum of the four stencil neighbours at every node (no `-4u` term, no
/// scaling).
pub fn neighbor_sum(u: &Field) -> Result<Field> {
    u.check_finite("neighbor_sum input")?;
    let g = u.grid;
    let mut out = Field::zeros(g);
    g.par_rows(&mut out.values, |j, row| g.neighbor_sum_row(&u.values, j, row));
    Ok(out)
}

/// Five-point Laplacian `(sum of neighbours - 4 u) / h^2`; zero on
/// Dirichlet-pinned nodes.
pub fn apply_laplacian(u: &Field) -> Result<Field> {
    u.check_finite("laplacian input")?;
    let g = u.grid;
    let inv_h2 = 1.0 / (g.h * g.h);
    let mut out = Field::zeros(g);
    g.par_rows(&mut out.values, |j, row| {
        g.neighbor_sum_row(&u.values, j, row);
        let src = &u.values[j * g.nx..(j + 1) * g.nx];
        for (i, (o, &c)) in row.iter_mut().zip(src).enumerate() {
            *o = if g.is_constrained(i, j) {
                0.0
            } else {
                (*o - 4.0 * c) * inv_h2
            };
        }
    });
    Ok(out)
}

/// Discrete l2 norm `h * sqrt(sum v^2)`.
pub fn l2_norm(u: &Field) -> f64 {
    let g = u.grid;
    let sum = g.reduce_rows(|j| {
        u.values[j * g.nx..(j + 1) * g.nx]
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
    });
    g.h * sum.sqrt()
}

/// `l2_norm(u - v)` without materialising the difference.
pub fn l2_distance(u: &Field, v: &Field) -> Result<f64> {
    u.ensure_same_grid(v)?;
    let g = u.grid;
    let sum = g.reduce_rows(|j| {
        let r = j * g.nx..(j + 1) * g.nx;
        u.values[r.clone()]
            .iter()
            .zip(&v.values[r])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
    });
    Ok(g.h * sum.sqrt())
}

pub fn linf_norm(u: &Field) -> f64 {
    u.values.iter().fold(0.0, |m, v| f64::max(m, v.abs()))
}

/// Discrete inner product `h^2 * sum u v`.
pub fn inner(u: &Field, v: &Field) -> Result<f64> {
    u.ensure_same_grid(v)?;
    let g = u.grid;
    let sum = g.reduce_rows(|j| {
        let r = j * g.nx..(j + 1) * g.nx;
        u.values[r.clone()]
            .iter()
            .zip(&v.values[r])
            .map(|(a, b)| a * b)
            .sum::<f64>()
    });
    Ok(g.h * g.h * sum)
}

/// Gradient bilinear form `(grad_h u, grad_h v)`: sum over stencil edges of
/// the products of edge differences, weight one (the `h^2` measure cancels the
/// `1/h^2` of the difference quotients). Satisfies
/// `grad_inner(u, v) = -inner(u, apply_laplacian(v))` whenever both fields
/// vanish on Dirichlet-pinned nodes.
pub fn grad_inner(u: &Field, v: &Field) -> Result<f64> {
    u.ensure_same_grid(v)?;
    let g = u.grid;
    Ok(g.reduce_rows(|j| g.grad_row(&u.values, &v.values, j)))
}

pub fn grad_norm_sq(u: &Field) -> f64 {
    let g = u.grid;
    g.reduce_rows(|j| g.grad_row(&u.values, &u.values, j))
}
