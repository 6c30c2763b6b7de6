//! Central finite differences over flat parameter vectors.
//!
//! These are the independent numerical routes the verification suites pit
//! the analytic code against; nothing here shares logic with the
//! backpropagation paths it checks.

use crate::curvature::{Matrix, Vector};
use crate::error::Result;

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Central-difference gradient of a scalar function.
pub fn gradient<F>(f: F, x: &Vector, h: f64) -> Result<Vector>
where
    F: Fn(&Vector) -> Result<f64>,
{
    let base = x.as_slice().to_vec();
    let mut g = vec![0.0; x.dim()];
    for j in 0..x.dim() {
        let mut plus = base.clone();
        plus[j] += h;
        let mut minus = base.clone();
        minus[j] -= h;
        g[j] = (f(&Vector::new(plus)?)? - f(&Vector::new(minus)?)?) / (2.0 * h);
    }
    Vector::new(g)
}

/// Second derivative matrix from double central differences of a scalar
/// function: H_ij = [f(+i+j) - f(+i-j) - f(-i+j) + f(-i-j)] / 4h².
pub fn hessian_of_scalar<F>(f: F, x: &Vector, h: f64) -> Result<Matrix>
where
    F: Fn(&Vector) -> Result<f64>,
{
    let n = x.dim();
    let base = x.as_slice().to_vec();
    let eval = |di: usize, si: f64, dj: usize, sj: f64| -> Result<f64> {
        let mut p = base.clone();
        p[di] += si * h;
        p[dj] += sj * h;
        f(&Vector::new(p)?)
    };
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let v = (eval(i, 1.0, j, 1.0)? - eval(i, 1.0, j, -1.0)? - eval(i, -1.0, j, 1.0)?
                + eval(i, -1.0, j, -1.0)?)
                / (4.0 * h * h);
            m.set(i, j, v);
        }
    }
    Ok(m)
}

/// Relative error between an analytic gradient and its finite-difference
/// counterpart: ‖g - g_fd‖ / max(‖g_fd‖, floor).
pub fn relative_gradient_error(analytic: &Vector, fd: &Vector, floor: f64) -> f64 {
    analytic.sub(fd).norm() / fd.norm().max(floor)
}
