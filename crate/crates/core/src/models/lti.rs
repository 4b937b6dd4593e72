use super::Dynamics;
use crate::linalg::{Matrix, Vector};
use crate::{Error, Result};

/// `f(x, u) = A x + B u`, `h(x) = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiMatrices {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
}

impl LtiMatrices {
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || c.ncols() != n {
            return Err(Error::Dimension(format!(
                "inconsistent LTI shapes: A {:?}, B {:?}, C {:?}",
                a.shape(),
                b.shape(),
                c.shape()
            )));
        }
        Ok(LtiMatrices { a, b, c })
    }

    /// Spectral radius of `A`.
    pub fn spectral_radius(&self) -> f64 {
        self.a
            .complex_eigenvalues()
            .iter()
            .map(|l| l.norm())
            .fold(0.0, f64::max)
    }

    pub fn is_unstable(&self) -> bool {
        self.spectral_radius() > 1.0
    }
}

impl Dynamics for LtiMatrices {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    fn transition(&self, x: &Vector, u: &Vector) -> Vector {
        &self.a * x + &self.b * u
    }

    fn output(&self, x: &Vector) -> Vector {
        &self.c * x
    }

    fn transition_jacobian(&self, _x: &Vector, _u: &Vector) -> Matrix {
        self.a.clone()
    }

    fn output_jacobian(&self, _x: &Vector) -> Matrix {
        self.c.clone()
    }

    fn linear_output(&self) -> Option<Matrix> {
        Some(self.c.clone())
    }

    fn output_lipschitz(&self) -> Option<f64> {
        Some(self.c.clone().svd(false, false).singular_values.max())
    }

    fn lti(&self) -> Option<&LtiMatrices> {
        Some(self)
    }
}
