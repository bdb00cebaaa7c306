//! Dense small-grid oracles: the assembled operator `alpha * lap - B`,
//! exponential integrators built from its eigendecomposition, and a Newton
//! solver for the implicit stabilized BDF systems.
//!
//! Everything here is `O(n^2)` memory and `O(n^3)` setup in the number of
//! evolved nodes, so it refuses grids above [`DENSE_CAP`] unknowns.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::engine::{history_term, History};
use crate::error::{Result, SbdfError};
use crate::grid::{l2_norm, Field, GridSpec};
use crate::model::NonlinearModel;
use crate::scheme::SchemeCoeffs;

pub const DENSE_CAP: usize = 4096;

const NEWTON_MAX_ITERS: usize = 50;

/// Matrix of `alpha * lap_h - B` on the evolved nodes of a grid, with the
/// index map between grid storage and vector positions.
#[derive(Clone, Debug)]
pub struct DenseOperator {
    grid: GridSpec,
    matrix: DMatrix<f64>,
    unknowns: Vec<usize>,
}

pub fn assemble_operator(grid: GridSpec, alpha: f64, b: f64) -> Result<DenseOperator> {
    let unknowns = grid.unknown_indices();
    let n = unknowns.len();
    if n > DENSE_CAP {
        return Err(SbdfError::OperatorTooLarge {
            unknowns: n,
            cap: DENSE_CAP,
        });
    }
    let mut slot = vec![usize::MAX; grid.len()];
    for (r, &k) in unknowns.iter().enumerate() {
        slot[k] = r;
    }
    let w = alpha / (grid.h() * grid.h());
    let mut matrix = DMatrix::zeros(n, n);
    for (r, &k) in unknowns.iter().enumerate() {
        let (i, j) = (k % grid.nx(), k / grid.nx());
        matrix[(r, r)] -= 4.0 * w + b;
        for nb in grid.stencil_neighbors(i, j).into_iter().flatten() {
            matrix[(r, slot[nb])] += w;
        }
    }
    Ok(DenseOperator {
        grid,
        matrix,
        unknowns,
    })
}

impl DenseOperator {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn unknowns(&self) -> usize {
        self.unknowns.len()
    }

    pub fn gather(&self, u: &Field) -> Result<DVector<f64>> {
        if *u.grid() != self.grid {
            return Err(SbdfError::GridMismatch("field is not on the operator grid".into()));
        }
        Ok(DVector::from_iterator(
            self.unknowns.len(),
            self.unknowns.iter().map(|&k| u.values()[k]),
        ))
    }

    /// Inverse of [`gather`](Self::gather); pinned nodes get zero.
    pub fn scatter(&self, v: &DVector<f64>) -> Field {
        let mut out = Field::zeros(self.grid);
        for (&k, &x) in self.unknowns.iter().zip(v.iter()) {
            out.values_mut()[k] = x;
        }
        out
    }

    pub fn apply(&self, u: &Field) -> Result<Field> {
        Ok(self.scatter(&(&self.matrix * self.gather(u)?)))
    }
}

/// `(e^z - 1) / z`.
pub fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-5 {
        1.0 + z * (0.5 + z / 6.0)
    } else {
        z.exp_m1() / z
    }
}

/// `(e^z - 1 - z) / z^2`.
pub fn phi2(z: f64) -> f64 {
    if z.abs() < 1e-2 {
        0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z * (1.0 / 120.0 + z * (1.0 / 720.0 + z / 5040.0))))
    } else {
        (z.exp_m1() - z) / (z * z)
    }
}

/// Orthonormal eigenbasis of the operator, either one dense matrix or a
/// pair of per-axis matrices whose Kronecker product it is.
enum Basis {
    Dense(DMatrix<f64>),
    Kron {
        vx: DMatrix<f64>,
        vy: DMatrix<f64>,
    },
}

/// Exponential integrators for `u' = L u + N(u)` with the dense operator's
/// `L`, applied through its eigendecomposition `L = V diag(lambda) V^T`.
pub struct ExponentialIntegrator {
    grid: GridSpec,
    unknowns: Vec<usize>,
    eigenvalues: DVector<f64>,
    basis: Basis,
}

/// Second-difference matrix of one axis restricted to its free nodes, read
/// off the 2-D stencil along row (or column) `line`.
fn axis_matrix(grid: &GridSpec, along_x: bool, free: &[usize], line: usize) -> DMatrix<f64> {
    let m = free.len();
    let mut slot = vec![usize::MAX; if along_x { grid.nx() } else { grid.ny() }];
    for (r, &i) in free.iter().enumerate() {
        slot[i] = r;
    }
    let mut t = DMatrix::zeros(m, m);
    for (r, &i) in free.iter().enumerate() {
        t[(r, r)] -= 2.0;
        let (ci, cj) = if along_x { (i, line) } else { (line, i) };
        let nb = grid.stencil_neighbors(ci, cj);
        let pair = if along_x { [nb[0], nb[1]] } else { [nb[2], nb[3]] };
        for k in pair.into_iter().flatten() {
            let pos = if along_x { k % grid.nx() } else { k / grid.nx() };
            t[(r, slot[pos])] += 1.0;
        }
    }
    t
}

impl ExponentialIntegrator {
    pub fn new(op: DenseOperator) -> Self {
        let eig = SymmetricEigen::new(op.matrix);
        Self {
            grid: op.grid,
            unknowns: op.unknowns,
            eigenvalues: eig.eigenvalues,
            basis: Basis::Dense(eig.eigenvectors),
        }
    }

    /// Same integrator as `new(assemble_operator(grid, alpha, b)?)`, but the
    /// eigendecomposition is done per axis: every boundary condition acts
    /// on one axis only, so the five-point operator is a Kronecker sum.
    /// Costs `O(nx^3 + ny^3)` instead of `O((nx ny)^3)`.
    pub fn separable(grid: GridSpec, alpha: f64, b: f64) -> Result<Self> {
        let unknowns = grid.unknown_indices();
        if unknowns.len() > DENSE_CAP {
            return Err(SbdfError::OperatorTooLarge {
                unknowns: unknowns.len(),
                cap: DENSE_CAP,
            });
        }
        let mut free_x: Vec<usize> = unknowns.iter().map(|k| k % grid.nx()).collect();
        let mut free_y: Vec<usize> = unknowns.iter().map(|k| k / grid.nx()).collect();
        free_x.sort_unstable();
        free_x.dedup();
        free_y.dedup();
        if unknowns.is_empty() {
            return Ok(Self {
                grid,
                unknowns,
                eigenvalues: DVector::zeros(0),
                basis: Basis::Dense(DMatrix::zeros(0, 0)),
            });
        }
        let ex = SymmetricEigen::new(axis_matrix(&grid, true, &free_x, free_y[0]));
        let ey = SymmetricEigen::new(axis_matrix(&grid, false, &free_y, free_x[0]));
        let w = alpha / (grid.h() * grid.h());
        let (mx, my) = (free_x.len(), free_y.len());
        let eigenvalues = DVector::from_iterator(
            mx * my,
            (0..my).flat_map(|q| (0..mx).map(move |p| (q, p)))
                .map(|(q, p)| w * (ex.eigenvalues[p] + ey.eigenvalues[q]) - b),
        );
        Ok(Self {
            grid,
            unknowns,
            eigenvalues,
            basis: Basis::Kron {
                vx: ex.eigenvectors,
                vy: ey.eigenvectors,
            },
        })
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    fn gather(&self, u: &Field) -> Result<DVector<f64>> {
        if *u.grid() != self.grid {
            return Err(SbdfError::GridMismatch("field is not on the operator grid".into()));
        }
        Ok(DVector::from_iterator(
            self.unknowns.len(),
            self.unknowns.iter().map(|&k| u.values()[k]),
        ))
    }

    fn scatter(&self, v: &DVector<f64>) -> Field {
        let mut out = Field::zeros(self.grid);
        for (&k, &x) in self.unknowns.iter().zip(v.iter()) {
            out.values_mut()[k] = x;
        }
        out
    }

    fn to_modes(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.basis {
            Basis::Dense(q) => q.tr_mul(v),
            Basis::Kron { vx, vy } => {
                // unknowns are row-major: rows of X run along x
                let x = DMatrix::from_row_slice(vy.nrows(), vx.nrows(), v.as_slice());
                let y = vy.tr_mul(&x) * vx;
                DVector::from_iterator(v.len(), y.transpose().iter().copied())
            }
        }
    }

    fn from_modes(&self, m: &DVector<f64>) -> DVector<f64> {
        match &self.basis {
            Basis::Dense(q) => q * m,
            Basis::Kron { vx, vy } => {
                let y = DMatrix::from_row_slice(vy.nrows(), vx.nrows(), m.as_slice());
                let x = vy * y * vx.transpose();
                DVector::from_iterator(m.len(), x.transpose().iter().copied())
            }
        }
    }

    fn nonlinear_modes(&self, u: &DVector<f64>, n: &dyn Fn(f64) -> f64) -> DVector<f64> {
        self.to_modes(&u.map(n))
    }

    /// `e^{dt L} u + dt phi1(dt L) N(u)`, with `N` applied node by node.
    pub fn etd1_step(&self, u: &Field, dt: f64, n: &dyn Fn(f64) -> f64) -> Result<Field> {
        let x = self.gather(u)?;
        Ok(self.scatter(&self.from_modes(&self.etd1_modes(&x, dt, n))))
    }

    fn etd1_modes(&self, x: &DVector<f64>, dt: f64, n: &dyn Fn(f64) -> f64) -> DVector<f64> {
        let y = self.to_modes(x);
        let ny = self.nonlinear_modes(x, n);
        DVector::from_iterator(
            y.len(),
            (0..y.len()).map(|r| {
                let z = dt * self.eigenvalues[r];
                z.exp() * y[r] + dt * phi1(z) * ny[r]
            }),
        )
    }

    /// ETD1 predictor followed by the `dt phi2(dt L) (N(pred) - N(u))`
    /// correction.
    pub fn etdrk2_step(&self, u: &Field, dt: f64, n: &dyn Fn(f64) -> f64) -> Result<Field> {
        let x = self.gather(u)?;
        let pred_modes = self.etd1_modes(&x, dt, n);
        let pred = self.from_modes(&pred_modes);
        let diff = self.to_modes(&(pred.map(n) - x.map(n)));
        let corrected = DVector::from_iterator(
            diff.len(),
            (0..diff.len()).map(|r| pred_modes[r] + dt * phi2(dt * self.eigenvalues[r]) * diff[r]),
        );
        Ok(self.scatter(&self.from_modes(&corrected)))
    }
}

/// Result of [`newton_solve_implicit`].
#[derive(Clone, Debug)]
pub struct NewtonSolution {
    pub field: Field,
    pub iters: usize,
    pub residual: f64,
}

/// Solves the implicit order-`k` system
/// `(beta a0 + beta B dt) u - beta dt (L u + N(u)) = H` with dense Newton,
/// starting from the newest history level. No cut-off is applied.
pub fn newton_solve_implicit(
    coeffs: &SchemeCoeffs,
    hist: &History,
    model: &NonlinearModel,
) -> Result<NewtonSolution> {
    let field0 = &hist.latest()[0];
    let b = model.b();
    let dt = hist.dt();
    let op = assemble_operator(*field0.grid(), model.alpha(), b)?;
    let h_term = history_term(coeffs, hist, b)?;
    let rhs = op.gather(&h_term)?;
    let target = 1e-12 * (1.0 + l2_norm(&h_term));
    let lead = coeffs.beta * (coeffs.a0() + b * dt);
    let bdt = coeffs.beta * dt;
    let n = op.unknowns();
    let base = DMatrix::<f64>::identity(n, n) * lead - &op.matrix * bdt;

    let residual_of = |x: &DVector<f64>| -> DVector<f64> {
        &base * x - &rhs - x.map(|v| bdt * model.nonlinear(v))
    };
    let field_norm = |v: &DVector<f64>| l2_norm(&op.scatter(v));

    let mut x = op.gather(field0)?;
    let mut r = residual_of(&x);
    let mut res = field_norm(&r);
    for it in 0..NEWTON_MAX_ITERS {
        if res <= target {
            return Ok(NewtonSolution {
                field: op.scatter(&x),
                iters: it,
                residual: res,
            });
        }
        let mut jac = base.clone();
        for (d, &v) in x.iter().enumerate() {
            jac[(d, d)] -= bdt * (model.derivative(v) + b);
        }
        let step = jac.lu().solve(&(-&r)).ok_or(SbdfError::NewtonFailed {
            iters: it,
            residual: res,
        })?;
        x += step;
        r = residual_of(&x);
        res = field_norm(&r);
        if !res.is_finite() {
            break;
        }
    }
    if res <= target {
        return Ok(NewtonSolution {
            field: op.scatter(&x),
            iters: NEWTON_MAX_ITERS,
            residual: res,
        });
    }
    Err(SbdfError::NewtonFailed {
        iters: NEWTON_MAX_ITERS,
        residual: res,
    })
}
