//! Dense univariate polynomials and ordinary least-squares fitting.
//!
//! Fits are unweighted. Regressor columns are scaled to unit norm before the
//! SVD solve; polynomial fits additionally map the abscissa onto [-1, 1] and
//! expand the result back into raw monomial coefficients.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Polynomial with coefficients in ascending powers: `c[0] + c[1] x + ...`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial(pub Vec<f64>);

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Polynomial(coeffs)
    }

    pub fn zero() -> Self {
        Polynomial(Vec::new())
    }

    pub fn constant(c: f64) -> Self {
        Polynomial(vec![c])
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Polynomial {
        Polynomial(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(n, &c)| n as f64 * c)
                .collect(),
        )
    }

    /// Antiderivative with zero constant term.
    pub fn antiderivative(&self) -> Polynomial {
        let mut out = Vec::with_capacity(self.0.len() + 1);
        out.push(0.0);
        out.extend(
            self.0
                .iter()
                .enumerate()
                .map(|(n, &c)| c / (n as f64 + 1.0)),
        );
        Polynomial(out)
    }

    pub fn scaled(&self, k: f64) -> Polynomial {
        Polynomial(self.0.iter().map(|c| c * k).collect())
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let n = self.0.len().max(other.0.len());
        Polynomial(
            (0..n)
                .map(|i| self.0.get(i).unwrap_or(&0.0) + other.0.get(i).unwrap_or(&0.0))
                .collect(),
        )
    }

    /// Re-expresses `p(u)` with `u = (x - center) / half_width` as a polynomial in `x`.
    pub fn from_normalized(p_u: &Polynomial, center: f64, half_width: f64) -> Polynomial {
        let inv = 1.0 / half_width;
        // (x - center)^n / h^n expanded term by term
        let mut out = vec![0.0; p_u.0.len().max(1)];
        let mut power = vec![1.0]; // coefficients of ((x - c)/h)^n
        for (n, &c) in p_u.0.iter().enumerate() {
            if n > 0 {
                let mut next = vec![0.0; power.len() + 1];
                for (k, &a) in power.iter().enumerate() {
                    next[k + 1] += a * inv;
                    next[k] -= a * center * inv;
                }
                power = next;
            }
            for (k, &a) in power.iter().enumerate() {
                out[k] += c * a;
            }
        }
        Polynomial(out)
    }

    /// Extremes of the polynomial over `[lo, hi]`, found by dense sampling plus
    /// the endpoints. Returns `(argmin, min, argmax, max)`.
    pub fn extrema(&self, lo: f64, hi: f64) -> (f64, f64, f64, f64) {
        const N: usize = 2001;
        let mut best = (lo, f64::INFINITY, lo, f64::NEG_INFINITY);
        for i in 0..N {
            let x = lo + (hi - lo) * i as f64 / (N - 1) as f64;
            let y = self.eval(x);
            if y < best.1 {
                best.0 = x;
                best.1 = y;
            }
            if y > best.3 {
                best.2 = x;
                best.3 = y;
            }
        }
        best
    }
}

/// Result of an ordinary least-squares solve.
#[derive(Debug, Clone)]
pub struct LinearFit {
    pub params: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub residual_rms: f64,
    pub dof: usize,
}

impl LinearFit {
    pub fn std_error(&self, i: usize) -> f64 {
        self.covariance[(i, i)].max(0.0).sqrt()
    }

    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.params.len()).map(|i| self.std_error(i)).collect()
    }
}

/// Relative singular-value cutoff below which a scaled design matrix is
/// treated as rank deficient.
const RANK_TOL: f64 = 1e-10;

/// Solves `min ‖A p - b‖²` with unit-norm column scaling.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<LinearFit> {
    let (rows, cols) = a.shape();
    if rows != b.len() {
        return Err(Error::Size {
            what: "least-squares right-hand side",
            expected: rows,
            found: b.len(),
        });
    }
    if rows < cols {
        return Err(Error::InsufficientExcitation(format!(
            "{rows} samples for {cols} parameters"
        )));
    }
    let mut scale = DVector::zeros(cols);
    let mut scaled = a.clone();
    for j in 0..cols {
        let norm = a.column(j).norm();
        if norm == 0.0 {
            return Err(Error::Conditioning(format!("regressor column {j} is identically zero")));
        }
        scale[j] = 1.0 / norm;
        scaled.column_mut(j).scale_mut(1.0 / norm);
    }
    let svd = scaled.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= RANK_TOL * smax {
        return Err(Error::Conditioning(format!(
            "design matrix is rank deficient (singular value ratio {:.3e})",
            smin / smax
        )));
    }
    let z = svd
        .solve(b, 0.0)
        .map_err(|e| Error::Conditioning(e.to_string()))?;
    let params = z.component_mul(&scale);
    let resid = a * &params - b;
    let sse = resid.norm_squared();
    let dof = rows - cols;
    let sigma2 = if dof > 0 { sse / dof as f64 } else { 0.0 };
    // (SᵀAᵀAS)⁻¹ from the SVD, then undo the scaling
    let v = svd.v_t.as_ref().expect("requested V").transpose();
    let mut inv_s2 = DMatrix::zeros(cols, cols);
    for i in 0..cols {
        inv_s2[(i, i)] = 1.0 / (svd.singular_values[i] * svd.singular_values[i]);
    }
    let cov_z = &v * inv_s2 * v.transpose() * sigma2;
    let s = DMatrix::from_diagonal(&scale);
    let covariance = &s * cov_z * &s;
    Ok(LinearFit {
        params,
        covariance,
        residual_rms: (sse / rows as f64).sqrt(),
        dof,
    })
}

/// A fitted polynomial with its fit statistics.
#[derive(Debug, Clone)]
pub struct PolyFit {
    pub poly: Polynomial,
    pub std_errors: Vec<f64>,
    pub residual_rms: f64,
    pub domain: (f64, f64),
    pub samples: usize,
}

/// Least-squares polynomial of the given degree through `(x, y)`.
pub fn fit_polynomial(x: &[f64], y: &[f64], degree: usize) -> Result<PolyFit> {
    if x.len() != y.len() {
        return Err(Error::Size {
            what: "polynomial fit ordinates",
            expected: x.len(),
            found: y.len(),
        });
    }
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if x.len() <= degree || !(hi > lo) {
        return Err(Error::InsufficientExcitation(format!(
            "{} samples spanning [{lo}, {hi}] cannot determine a degree-{degree} polynomial",
            x.len()
        )));
    }
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let k = degree + 1;
    let a = DMatrix::from_fn(x.len(), k, |i, j| ((x[i] - center) / half).powi(j as i32));
    let b = DVector::from_column_slice(y);
    let fit = least_squares(&a, &b)?;
    let p_u = Polynomial(fit.params.iter().copied().collect());
    let poly = Polynomial::from_normalized(&p_u, center, half);

    // Propagate the covariance through the (linear) change of basis.
    let mut t = DMatrix::zeros(k, k);
    for j in 0..k {
        let mut unit = vec![0.0; k];
        unit[j] = 1.0;
        let col = Polynomial::from_normalized(&Polynomial(unit), center, half);
        for (i, &c) in col.0.iter().enumerate().take(k) {
            t[(i, j)] = c;
        }
    }
    let cov = &t * &fit.covariance * t.transpose();
    Ok(PolyFit {
        poly,
        std_errors: (0..k).map(|i| cov[(i, i)].max(0.0).sqrt()).collect(),
        residual_rms: fit.residual_rms,
        domain: (lo, hi),
        samples: x.len(),
    })
}

/// Straight-line fit `y = intercept + slope x`; returns the fit and its
/// coefficients as `(intercept, slope)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<(LinearFit, f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::Size {
            what: "line fit ordinates",
            expected: x.len(),
            found: y.len(),
        });
    }
    let a = DMatrix::from_fn(x.len(), 2, |i, j| if j == 0 { 1.0 } else { x[i] });
    let fit = least_squares(&a, &DVector::from_column_slice(y))?;
    let (b0, b1) = (fit.params[0], fit.params[1]);
    Ok((fit, b0, b1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn horner_and_calculus() {
        let p = Polynomial::new(vec![1.0, -2.0, 3.0]);
        assert_eq!(p.eval(2.0), 1.0 - 4.0 + 12.0);
        assert_eq!(p.derivative().coeffs(), &[-2.0, 6.0]);
        assert_eq!(p.antiderivative().coeffs(), &[0.0, 1.0, -1.0, 1.0]);
        assert_eq!(Polynomial::zero().eval(3.0), 0.0);
    }

    #[test]
    fn normalized_basis_expansion() {
        let p_u = Polynomial::new(vec![0.5, -1.0, 2.0, 0.25]);
        let p_x = Polynomial::from_normalized(&p_u, 0.7, 0.3);
        for &x in &[0.0, 0.4, 0.7, 1.0, 1.3] {
            let u = (x - 0.7) / 0.3;
            assert_relative_eq!(p_x.eval(x), p_u.eval(u), epsilon = 1e-12, max_relative = 1e-12);
        }
    }

    #[test]
    fn exact_polynomial_is_recovered() {
        let truth = Polynomial::new(vec![0.0, 5.8e-3, 0.0, 1.2e-3, -3e-4]);
        let x: Vec<f64> = (0..300).map(|i| 1.57 * i as f64 / 299.0).collect();
        let y: Vec<f64> = x.iter().map(|&v| truth.eval(v)).collect();
        let fit = fit_polynomial(&x, &y, 4).unwrap();
        for (a, b) in fit.poly.coeffs().iter().zip(truth.coeffs()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert!(fit.residual_rms < 1e-15);
    }

    #[test]
    fn underdetermined_fit_is_rejected() {
        let err = fit_polynomial(&[0.0, 1.0], &[1.0, 2.0], 3).unwrap_err();
        assert!(matches!(err, Error::InsufficientExcitation(_)));
    }

    #[test]
    fn collinear_regressors_are_rejected() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(matches!(least_squares(&a, &b), Err(Error::Conditioning(_))));
    }

    #[test]
    fn line_fit_standard_error_matches_textbook_formula() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y = [0.1, 0.9, 2.2, 2.8, 4.1];
        let (fit, b0, b1) = fit_line(&x, &y).unwrap();
        let n = x.len() as f64;
        let xm = x.iter().sum::<f64>() / n;
        let sxx: f64 = x.iter().map(|v| (v - xm).powi(2)).sum();
        let sse: f64 = x.iter().zip(&y).map(|(xi, yi)| (yi - b0 - b1 * xi).powi(2)).sum();
        let se_slope = (sse / (n - 2.0) / sxx).sqrt();
        assert_relative_eq!(fit.std_error(1), se_slope, max_relative = 1e-10);
    }
}
