//! Small numerical helpers shared by the verification routines: Gauss-Legendre
//! quadrature, finite-difference stencil weights and dense Jacobians.

use nalgebra::DMatrix;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss-Legendre quadrature of `f` over [a, b].
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(order);
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * width;
        let mid = lo + 0.5 * width;
        let mut panel = 0.0;
        for (x, w) in nodes.iter().zip(&weights) {
            panel += w * f(mid + 0.5 * width * x);
        }
        total += 0.5 * width * panel;
    }
    total
}

/// Fornberg's algorithm: weights for the `order`-th derivative at `x0` from
/// values at `grid`.
pub fn fd_weights(x0: f64, grid: &[f64], order: usize) -> Vec<f64> {
    let n = grid.len();
    let m = order;
    let mut c = vec![vec![vec![0.0; n]; n]; m + 1];
    c[0][0][0] = 1.0;
    let mut c1 = 1.0;
    for i in 1..n {
        let mut c2 = 1.0;
        for j in 0..i {
            let c3 = grid[i] - grid[j];
            c2 *= c3;
            for k in 0..=m.min(i) {
                let prev_a = c[k][i - 1][j];
                let prev_b = if k > 0 { c[k - 1][i - 1][j] } else { 0.0 };
                c[k][i][j] = ((grid[i] - x0) * prev_a - k as f64 * prev_b) / c3;
            }
        }
        for k in 0..=m.min(i) {
            let prev_a = c[k][i - 1][i - 1];
            let prev_b = if k > 0 { c[k - 1][i - 1][i - 1] } else { 0.0 };
            c[k][i][i] = c1 / c2 * (k as f64 * prev_b - (grid[i - 1] - x0) * prev_a);
        }
        c1 = c2;
    }
    c[m][n - 1].clone()
}

/// Central finite-difference Jacobian of `f` at `x` with the step
/// `1e-5 * (1 + |x|)`.
pub fn fd_jacobian<F>(f: F, x: &[f64], out_dim: usize) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let step = 1e-5 * (1.0 + norm);
    let mut jac = DMatrix::zeros(out_dim, x.len());
    let mut probe = x.to_vec();
    for j in 0..x.len() {
        probe[j] = x[j] + step;
        let plus = f(&probe);
        probe[j] = x[j] - step;
        let minus = f(&probe);
        probe[j] = x[j];
        for i in 0..out_dim {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * step);
        }
    }
    jac
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(8);
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
        // degree 15 is exact for 8 points
        let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((q - 2.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn fornberg_reproduces_central_second_difference() {
        let w = fd_weights(0.0, &[-1.0, 0.0, 1.0], 2);
        assert!((w[0] - 1.0).abs() < 1e-14);
        assert!((w[1] + 2.0).abs() < 1e-14);
        assert!((w[2] - 1.0).abs() < 1e-14);
    }
}
