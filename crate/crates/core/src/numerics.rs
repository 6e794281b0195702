// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dense linear algebra shared by the probes: centering, ridge solves, SVD.
//!
//! Matrices are `nalgebra::DMatrix<f64>` with samples along rows.

use nalgebra::{Cholesky, DVector};

use crate::error::{Error, Result};

pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Column-centered features and targets with the means needed to rebuild
/// the intercept.
#[derive(Debug, Clone)]
pub struct CenteredDesign {
    pub x: Matrix,
    pub x_mean: Vector,
    /// Per-feature scale when unit-variance scaling was requested.
    pub x_scale: Option<Vector>,
    pub y: Matrix,
    pub y_mean: Vector,
}

fn column_means(m: &Matrix) -> Vector {
    let n = m.nrows() as f64;
    Vector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}

fn subtract_row(m: &mut Matrix, v: &Vector) {
    for (mut col, &mu) in m.column_iter_mut().zip(v.iter()) {
        col.add_scalar_mut(-mu);
    }
}

pub fn center(x: &Matrix, y: &Matrix) -> Result<CenteredDesign> {
    center_with(x, y, false)
}

/// Centers both matrices; with `unit_variance` the feature columns are also
/// divided by their standard deviation (constant columns are left at scale 1).
pub fn center_with(x: &Matrix, y: &Matrix, unit_variance: bool) -> Result<CenteredDesign> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "centering needs at least 2 rows, got {n}"
        )));
    }
    if y.nrows() != n {
        return Err(Error::Shape(format!(
            "features have {n} rows but targets have {}",
            y.nrows()
        )));
    }
    let x_mean = column_means(x);
    let y_mean = column_means(y);
    let mut xc = x.clone();
    subtract_row(&mut xc, &x_mean);
    let mut yc = y.clone();
    subtract_row(&mut yc, &y_mean);

    let x_scale = if unit_variance {
        let scale = Vector::from_iterator(
            xc.ncols(),
            xc.column_iter().map(|c| {
                let sd = (c.norm_squared() / (n as f64 - 1.0)).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            }),
        );
        for (mut col, &s) in xc.column_iter_mut().zip(scale.iter()) {
            col /= s;
        }
        Some(scale)
    } else {
        None
    };

    Ok(CenteredDesign {
        x: xc,
        x_mean,
        x_scale,
        y: yc,
        y_mean,
    })
}

/// Ridge regression on a centered design.
///
/// Returns `W` (`K x d`) and `b` (`K`) in the original feature units, so that
/// `y ≈ W x + b`. The primal `d x d` system is factorized when `d <= n`,
/// otherwise the equivalent `n x n` dual system is.
pub fn ridge_solve(design: &CenteredDesign, alpha: f64) -> Result<(Matrix, Vector)> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "ridge alpha must be finite and >= 0, got {alpha}"
        )));
    }
    let x = &design.x;
    let y = &design.y;
    let (n, d) = x.shape();

    let wt = if d <= n {
        let mut gram = x.tr_mul(x);
        for i in 0..d {
            gram[(i, i)] += alpha;
        }
        let chol = factorize(gram, alpha)?;
        chol.solve(&x.tr_mul(y))
    } else {
        let mut gram = x * x.transpose();
        for i in 0..n {
            gram[(i, i)] += alpha;
        }
        let chol = factorize(gram, alpha)?;
        x.tr_mul(&chol.solve(y))
    };

    let mut w = wt.transpose();
    if let Some(scale) = &design.x_scale {
        for (mut col, &s) in w.column_iter_mut().zip(scale.iter()) {
            col /= s;
        }
    }
    let b = &design.y_mean - &w * &design.x_mean;
    Ok((w, b))
}

fn factorize(gram: Matrix, alpha: f64) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let max_diag = gram.diagonal().amax();
    let chol = Cholesky::new(gram).ok_or(Error::Singular { alpha })?;
    // Cholesky succeeds on numerically rank-deficient systems with tiny pivots.
    let min_pivot = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v * v));
    if max_diag <= 0.0 || min_pivot <= 1e-13 * max_diag {
        return Err(Error::Singular { alpha });
    }
    Ok(chol)
}

/// Thin SVD `M = U diag(S) Vᵀ` with singular values in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `rows x r0`
    pub u: Matrix,
    pub s: Vector,
    /// `cols x r0`
    pub v: Matrix,
}

impl Svd {
    /// `U_r diag(S_r) V_rᵀ` from the leading `r` triplets.
    pub fn reconstruct(&self, r: usize) -> Matrix {
        let r = r.min(self.s.len());
        let u = self.u.columns(0, r);
        let v = self.v.columns(0, r);
        let mut us = u.into_owned();
        for (mut col, &s) in us.column_iter_mut().zip(self.s.iter()) {
            col *= s;
        }
        us * v.transpose()
    }
}

pub fn svd(m: &Matrix) -> Result<Svd> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("svd input contains non-finite entries".into()));
    }
    let r0 = m.nrows().min(m.ncols());
    if r0 == 0 {
        return Ok(Svd {
            u: Matrix::zeros(m.nrows(), 0),
            s: Vector::zeros(0),
            v: Matrix::zeros(m.ncols(), 0),
        });
    }
    let dec = m.clone().svd(true, true);
    let u = dec.u.ok_or_else(|| Error::Numeric("svd did not return U".into()))?;
    let vt = dec.v_t.ok_or_else(|| Error::Numeric("svd did not return Vᵀ".into()))?;
    let mut order: Vec<usize> = (0..r0).collect();
    order.sort_by(|&a, &b| dec.singular_values[b].total_cmp(&dec.singular_values[a]));
    let s = Vector::from_iterator(r0, order.iter().map(|&i| dec.singular_values[i]));
    let u = Matrix::from_columns(&order.iter().map(|&i| u.column(i)).collect::<Vec<_>>());
    let v = Matrix::from_columns(&order.iter().map(|&i| vt.row(i).transpose()).collect::<Vec<_>>());
    Ok(Svd { u, s, v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Gaussian};
    use approx::assert_abs_diff_eq;

    fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut g = Gaussian::new(stream_rng(seed, 0));
        Matrix::from_fn(rows, cols, |_, _| g.next())
    }

    #[test]
    fn center_small() {
        let x = Matrix::from_row_slice(2, 1, &[1.0, 3.0]);
        let y = Matrix::from_row_slice(2, 1, &[0.0, 0.0]);
        let c = center(&x, &y).unwrap();
        assert_eq!(c.x.as_slice(), &[-1.0, 1.0]);
        assert_eq!(c.x_mean[0], 2.0);
    }

    #[test]
    fn center_already_centered() {
        let x = Matrix::from_row_slice(3, 2, &[-1.0, 2.0, 0.0, 0.0, 1.0, -2.0]);
        let c = center(&x, &x).unwrap();
        assert_eq!(c.x, x);
        assert!(c.x_mean.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn center_random_column_means() {
        let x = gaussian_matrix(50, 6, 1).map(|v| 10.0 + 3.0 * v);
        let c = center(&x, &x).unwrap();
        for col in c.x.column_iter() {
            let sd = (col.norm_squared() / 49.0).sqrt();
            assert!((col.sum() / 50.0).abs() < 1e-12 * sd);
        }
    }

    #[test]
    fn center_needs_two_rows() {
        let x = Matrix::from_row_slice(1, 1, &[1.0]);
        assert!(matches!(center(&x, &x), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn ridge_exact_line() {
        let x = Matrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        let y = Matrix::from_row_slice(3, 1, &[2.0, 4.0, 6.0]);
        let (w, b) = ridge_solve(&center(&x, &y).unwrap(), 0.0).unwrap();
        assert_abs_diff_eq!(w[(0, 0)], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn ridge_alpha_one_by_hand() {
        // centered x = (-1, 0, 1), y = (-2, 0, 2): w = 4 / (2 + 1), b = 4 - 2w
        let x = Matrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        let y = Matrix::from_row_slice(3, 1, &[2.0, 4.0, 6.0]);
        let (w, b) = ridge_solve(&center(&x, &y).unwrap(), 1.0).unwrap();
        assert_abs_diff_eq!(w[(0, 0)], 4.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b[0], 4.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn ridge_singular_at_zero_alpha() {
        let x = Matrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let y = Matrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        let err = ridge_solve(&center(&x, &y).unwrap(), 0.0).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }));
        assert!(err.to_string().contains("alpha > 0"));
        assert!(ridge_solve(&center(&x, &y).unwrap(), 0.5).is_ok());
    }

    fn normal_equation_residual(design: &CenteredDesign, w: &Matrix, alpha: f64) -> (f64, f64) {
        let xtx = design.x.tr_mul(&design.x);
        let xty = design.x.tr_mul(&design.y);
        let wt = w.transpose();
        let r = &xtx * &wt + &wt * alpha - &xty;
        (r.norm(), xty.norm())
    }

    #[test]
    fn ridge_normal_equations_primal_and_dual() {
        for (n, d) in [(60, 8), (20, 45)] {
            let x = gaussian_matrix(n, d, 3);
            let y = gaussian_matrix(n, 3, 4);
            let design = center(&x, &y).unwrap();
            let alpha = 2.5;
            let (w, _) = ridge_solve(&design, alpha).unwrap();
            let (res, scale) = normal_equation_residual(&design, &w, alpha);
            assert!(res < 1e-8 * scale, "n={n} d={d} residual {res}");
        }
    }

    #[test]
    fn dual_and_primal_agree() {
        let x = gaussian_matrix(30, 30, 8);
        let y = gaussian_matrix(30, 2, 9);
        let design = center(&x, &y).unwrap();
        let (w1, b1) = ridge_solve(&design, 3.0).unwrap();
        let mut wide = x.clone().resize_horizontally(31, 0.0);
        wide.column_mut(30).fill(0.0);
        let (w2, b2) = ridge_solve(&center(&wide, &y).unwrap(), 3.0).unwrap();
        assert!((w1 - w2.columns(0, 30)).amax() < 1e-10);
        assert!((b1 - b2).amax() < 1e-10);
    }

    #[test]
    fn unit_variance_option_predicts_in_original_units() {
        let x = gaussian_matrix(40, 3, 5).map(|v| 100.0 * v);
        let y = &x * Matrix::from_row_slice(3, 1, &[0.5, -1.0, 2.0]);
        let (w, _) = ridge_solve(&center_with(&x, &y, true).unwrap(), 1e-9).unwrap();
        assert_abs_diff_eq!(w[(0, 0)], 0.5, epsilon = 1e-8);
        assert_abs_diff_eq!(w[(0, 2)], 2.0, epsilon = 1e-8);
    }

    #[test]
    fn training_loss_nonincreasing_as_alpha_shrinks() {
        let x = gaussian_matrix(40, 6, 10);
        let y = gaussian_matrix(40, 2, 11);
        let design = center(&x, &y).unwrap();
        let mut last = f64::INFINITY;
        for alpha in [1000.0, 100.0, 10.0, 1.0, 0.1, 0.0] {
            let (w, _) = ridge_solve(&design, alpha).unwrap();
            let loss = (&design.x * w.transpose() - &design.y).norm_squared();
            assert!(loss <= last + 1e-12);
            last = loss;
        }
    }

    #[test]
    fn svd_diag() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]);
        let s = svd(&m).unwrap();
        assert_abs_diff_eq!(s.s[0], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.s[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn svd_reconstruction_and_orthonormality() {
        for (k, d, seed) in [(5, 64, 1u64), (3, 3, 2), (8, 20, 3), (6, 2, 4)] {
            let m = gaussian_matrix(k, d, seed);
            let s = svd(&m).unwrap();
            let r0 = k.min(d);
            assert_eq!(s.s.len(), r0);
            assert!(s.s.as_slice().windows(2).all(|w| w[0] >= w[1]));
            assert!((s.reconstruct(r0) - &m).norm() < 1e-10 * m.norm());
            assert!((s.u.tr_mul(&s.u) - Matrix::identity(r0, r0)).amax() < 1e-10);
            assert!((s.v.tr_mul(&s.v) - Matrix::identity(r0, r0)).amax() < 1e-10);
        }
    }

    /// Roots of the characteristic polynomial of `M Mᵀ` for 2x2 and 3x3 Gram matrices.
    fn char_poly_singular_values(m: &Matrix) -> Vec<f64> {
        let g = m * m.transpose();
        let mut eig = if g.nrows() == 2 {
            let tr = g[(0, 0)] + g[(1, 1)];
            let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)];
            let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
            vec![tr / 2.0 + disc, tr / 2.0 - disc]
        } else {
            // trigonometric solution of the symmetric cubic
            let p1 = g[(0, 1)].powi(2) + g[(0, 2)].powi(2) + g[(1, 2)].powi(2);
            let q = g.trace() / 3.0;
            let p2 = (g[(0, 0)] - q).powi(2) + (g[(1, 1)] - q).powi(2) + (g[(2, 2)] - q).powi(2) + 2.0 * p1;
            let p = (p2 / 6.0).sqrt();
            let b = (&g - Matrix::identity(3, 3) * q) / p;
            let r = (b.determinant() / 2.0).clamp(-1.0, 1.0);
            let phi = r.acos() / 3.0;
            let e1 = q + 2.0 * p * phi.cos();
            let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
            vec![e1, 3.0 * q - e1 - e3, e3]
        };
        eig.sort_by(|a, b| b.total_cmp(a));
        eig.into_iter().map(|e| e.max(0.0).sqrt()).collect()
    }

    #[test]
    fn svd_matches_characteristic_polynomial() {
        for seed in 0..20u64 {
            for (k, d) in [(2, 2), (2, 5), (3, 3), (3, 7)] {
                let m = gaussian_matrix(k, d, seed);
                let s = svd(&m).unwrap();
                for (a, b) in s.s.iter().zip(char_poly_singular_values(&m)) {
                    assert_abs_diff_eq!(*a, b, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn svd_rejects_nan() {
        let m = Matrix::from_row_slice(1, 2, &[1.0, f64::NAN]);
        assert!(matches!(svd(&m), Err(Error::Numeric(_))));
    }
}
