//! Self-expression coefficients, their sparsity penalty, and the temporal
//! smoothness penalty on consecutive-column differences.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::net::LatentMatrix;

/// Default guard for the column-norm subgradient at zero columns.
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// `n × n` coefficient matrix; column `j` describes window `j` as a
/// combination of the other windows.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfExprMatrix {
    theta: Array2<f64>,
    zero_diagonal: bool,
}

impl SelfExprMatrix {
    pub fn zeros(n: usize, zero_diagonal: bool) -> Result<Self> {
        Self::from_array(Array2::zeros((n, n)), zero_diagonal)
    }

    /// Wraps `theta`, projecting the diagonal to zero when constrained.
    pub fn from_array(theta: Array2<f64>, zero_diagonal: bool) -> Result<Self> {
        let (rows, cols) = theta.dim();
        if rows != cols {
            return Err(Error::shape("self-expression matrix", (rows, rows), (rows, cols)));
        }
        if rows < 2 {
            return Err(Error::InvalidConfig(format!(
                "self-expression needs at least 2 windows, got {rows}"
            )));
        }
        let mut out = Self {
            theta,
            zero_diagonal,
        };
        out.project();
        Ok(out)
    }

    pub fn theta(&self) -> &Array2<f64> {
        &self.theta
    }

    pub fn zero_diagonal(&self) -> bool {
        self.zero_diagonal
    }

    pub fn order(&self) -> usize {
        self.theta.nrows()
    }

    /// Mutable access for optimizers. Call [`SelfExprMatrix::project`] after
    /// writing.
    pub fn theta_mut(&mut self) -> &mut Array2<f64> {
        &mut self.theta
    }

    /// Re-impose the zero-diagonal constraint, if any.
    pub fn project(&mut self) {
        if self.zero_diagonal {
            self.theta.diag_mut().fill(0.0);
        }
    }

    /// Zero the diagonal of a gradient when the constraint is active.
    pub fn project_gradient(&self, grad: &mut Array2<f64>) {
        if self.zero_diagonal {
            grad.diag_mut().fill(0.0);
        }
    }
}

/// Bidiagonal `n × (n−1)` operator with `ΘR = [θ₂−θ₁, …, θₙ−θₙ₋₁]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceMatrix {
    r: Array2<f64>,
}

impl DifferenceMatrix {
    pub fn build(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidConfig(format!(
                "difference matrix needs n >= 2, got {n}"
            )));
        }
        let mut r = Array2::zeros((n, n - 1));
        for j in 0..n - 1 {
            r[[j, j]] = -1.0;
            r[[j + 1, j]] = 1.0;
        }
        Ok(Self { r })
    }

    pub fn r(&self) -> &Array2<f64> {
        &self.r
    }

    pub fn order(&self) -> usize {
        self.r.nrows()
    }

    /// `Θ·R`, i.e. consecutive column differences.
    pub fn apply(&self, theta: ArrayView2<f64>) -> Result<Array2<f64>> {
        if theta.ncols() != self.r.nrows() {
            return Err(Error::shape("difference operator", self.r.nrows(), theta.ncols()));
        }
        Ok(theta.dot(&self.r))
    }
}

pub fn build_difference_matrix(n: usize) -> Result<DifferenceMatrix> {
    DifferenceMatrix::build(n)
}

/// `Ẑ = Z·Θ`.
pub fn self_expression(z: &LatentMatrix, theta: &SelfExprMatrix) -> Result<LatentMatrix> {
    if z.count() != theta.order() {
        return Err(Error::shape("self-expression", theta.order(), z.count()));
    }
    Ok(LatentMatrix {
        z: z.z.dot(&theta.theta),
    })
}

/// `Σ|θᵢⱼ|` and its sign subgradient (0 at 0, diagonal zeroed if constrained).
pub fn l1_value_and_subgrad(theta: &SelfExprMatrix) -> (f64, Array2<f64>) {
    let value = theta.theta.iter().map(|v| v.abs()).sum();
    let mut grad = theta.theta.mapv(|v| {
        if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            0.0
        }
    });
    theta.project_gradient(&mut grad);
    (value, grad)
}

/// Sum of column Euclidean norms, with subgradient `m_j / max(‖m_j‖, ε)`.
pub fn l12_value_and_subgrad(m: ArrayView2<f64>, epsilon: f64) -> (f64, Array2<f64>) {
    let mut value = 0.0;
    let mut grad = Array2::zeros(m.raw_dim());
    for (col, mut g) in m.axis_iter(Axis(1)).zip(grad.axis_iter_mut(Axis(1))) {
        let norm = col.dot(&col).sqrt();
        value += norm;
        let scale = norm.max(epsilon);
        if scale > 0.0 {
            g.zip_mut_with(&col, |g, &c| *g = c / scale);
        }
    }
    (value, grad)
}

/// `‖ΘR‖₁,₂` and its gradient `G·Rᵀ` with respect to `Θ`.
pub fn smoothness_term(
    theta: &SelfExprMatrix,
    r: &DifferenceMatrix,
    epsilon: f64,
) -> Result<(f64, Array2<f64>)> {
    let diffs = r.apply(theta.theta.view())?;
    let (value, g) = l12_value_and_subgrad(diffs.view(), epsilon);
    let mut grad = g.dot(&r.r.t());
    theta.project_gradient(&mut grad);
    Ok((value, grad))
}
