use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Dense LU solve of `a x = b`.
pub(crate) fn solve(a: DMatrix<f64>, b: &DVector<f64>, context: &'static str) -> Result<DVector<f64>> {
    let x = a.lu().solve(b).ok_or(Error::Singular(context))?;
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::Singular(context))
    }
}

/// Solves the discounted fixed point `x = b + discount * m x`.
pub(crate) fn solve_fixed_point(
    m: &DMatrix<f64>,
    b: &DVector<f64>,
    discount: f64,
    context: &'static str,
) -> Result<DVector<f64>> {
    let n = m.nrows();
    let a = DMatrix::<f64>::identity(n, n) - m * discount;
    solve(a, b, context)
}

/// Normalised discounted stationary measure `d = (1 - discount) mu + discount m^T d`.
pub(crate) fn discounted_occupancy(
    m: &DMatrix<f64>,
    mu: &DVector<f64>,
    discount: f64,
    context: &'static str,
) -> Result<DVector<f64>> {
    let n = m.nrows();
    let a = DMatrix::<f64>::identity(n, n) - m.transpose() * discount;
    let d = solve(a, &(mu * (1.0 - discount)), context)?;
    // clean rounding noise so callers always see a distribution
    Ok(d.map(|v| if v < 0.0 && v > -1e-14 { 0.0 } else { v }))
}
