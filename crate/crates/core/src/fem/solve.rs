use super::CsrMatrix;
use crate::error::{Error, Result};

/// Relative residual target `‖Ax − b‖₂ / ‖b‖₂` for every SPD solve.
pub const SOLVE_TOL: f64 = 1e-10;

/// Matrices whose bandwidth is at most this are factored directly.
const DIRECT_MAX_BANDWIDTH: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolveMethod {
    /// Banded Cholesky for narrow bands, conjugate gradients otherwise.
    #[default]
    Auto,
    ConjugateGradient,
    BandedCholesky,
}

#[derive(Debug, Clone, Copy)]
pub struct SpdSolver {
    pub method: SolveMethod,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SpdSolver {
    fn default() -> Self {
        SpdSolver {
            method: SolveMethod::Auto,
            tol: SOLVE_TOL,
            max_iter: 10_000,
        }
    }
}

/// Solves `A x = b` for symmetric positive definite `A`.
///
/// The caller must not pass a pure Neumann stiffness matrix; every system
/// assembled by this crate carries a mass term.
pub fn solve_spd(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    SpdSolver::default().solve(a, b, None)
}

impl SpdSolver {
    pub fn solve(&self, a: &CsrMatrix, b: &[f64], guess: Option<&[f64]>) -> Result<Vec<f64>> {
        if b.len() != a.dim() {
            return Err(Error::invalid(format!(
                "right-hand side has length {}, matrix is {}x{}",
                b.len(),
                a.dim(),
                a.dim()
            )));
        }
        if guess.is_some_and(|g| g.len() != a.dim()) {
            return Err(Error::invalid("initial guess has the wrong length"));
        }
        let direct = match self.method {
            SolveMethod::Auto => a.bandwidth() <= DIRECT_MAX_BANDWIDTH,
            SolveMethod::BandedCholesky => true,
            SolveMethod::ConjugateGradient => false,
        };
        if direct {
            let x = BandedCholesky::factor(a)?.solve(b);
            let residual = relative_residual(a, &x, b);
            if residual.is_nan() || residual > self.tol {
                return Err(Error::SolverFailure {
                    iterations: 0,
                    residual,
                });
            }
            Ok(x)
        } else {
            pcg(a, b, guess, self.tol, self.max_iter)
        }
    }
}

pub fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let r = norm(ax.iter().zip(b).map(|(p, q)| p - q));
    let bn = norm(b.iter().copied());
    if bn == 0.0 {
        r
    } else {
        r / bn
    }
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradients.
fn pcg(a: &CsrMatrix, b: &[f64], guess: Option<&[f64]>, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = a.dim();
    let b_norm = norm(b.iter().copied());
    if b_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut x = guess.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut r = a.mul_vec(&x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut residual = norm(r.iter().copied()) / b_norm;
    for it in 0..max_iter {
        if residual <= tol {
            return Ok(x);
        }
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap.is_nan() || pap <= 0.0 {
            return Err(Error::SolverFailure {
                iterations: it,
                residual,
            });
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        residual = norm(r.iter().copied()) / b_norm;
    }
    if residual <= tol {
        Ok(x)
    } else {
        Err(Error::SolverFailure {
            iterations: max_iter,
            residual,
        })
    }
}

/// Cholesky factor `L` of a banded SPD matrix, stored row by row over the band.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    band: usize,
    // row i holds L[i][i-band ..= i]; entries left of column 0 stay zero
    rows: Vec<f64>,
}

impl BandedCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.dim();
        let band = a.bandwidth();
        let w = band + 1;
        let mut rows = vec![0.0; n * w];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    rows[i * w + (j + band - i)] = v;
                }
            }
        }
        for i in 0..n {
            let lo = i.saturating_sub(band);
            for j in lo..=i {
                // L[i][j] = (A[i][j] - Σ_k L[i][k] L[j][k]) / L[j][j]
                let klo = lo.max(j.saturating_sub(band));
                let mut s = rows[i * w + (j + band - i)];
                for k in klo..j {
                    s -= rows[i * w + (k + band - i)] * rows[j * w + (k + band - j)];
                }
                if j == i {
                    if s.is_nan() || s <= 0.0 {
                        return Err(Error::SolverFailure {
                            iterations: 0,
                            residual: f64::NAN,
                        });
                    }
                    rows[i * w + band] = s.sqrt();
                } else {
                    rows[i * w + (j + band - i)] = s / rows[j * w + band];
                }
            }
        }
        Ok(BandedCholesky { n, band, rows })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, band, w) = (self.n, self.band, self.band + 1);
        let mut y = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(band);
            let mut s = y[i];
            for (k, yk) in y.iter().enumerate().take(i).skip(lo) {
                s -= self.rows[i * w + (k + band - i)] * yk;
            }
            y[i] = s / self.rows[i * w + band];
        }
        for i in (0..n).rev() {
            let hi = (i + band).min(n - 1);
            let mut s = y[i];
            for (k, yk) in y.iter().enumerate().take(hi + 1).skip(i + 1) {
                s -= self.rows[k * w + (i + band - k)] * yk;
            }
            y[i] = s / self.rows[i * w + band];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn laplacian_plus_identity(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 3.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
            if i + 5 < n {
                t.push((i, i + 5, -0.5));
                t.push((i + 5, i, -0.5));
            }
        }
        CsrMatrix::from_triplets(n, &t).unwrap()
    }

    #[test]
    fn diagonal_system() {
        let a = CsrMatrix::from_diagonal(&[2.0, 4.0, 0.5]);
        let x = solve_spd(&a, &[1.0, 1.0, 1.0]).unwrap();
        assert_relative_eq!(x[0], 0.5);
        assert_relative_eq!(x[1], 0.25);
        assert_relative_eq!(x[2], 2.0);
    }

    #[test]
    fn methods_agree() {
        let a = laplacian_plus_identity(40);
        let x_true: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let b = a.mul_vec(&x_true);
        for method in [SolveMethod::ConjugateGradient, SolveMethod::BandedCholesky, SolveMethod::Auto] {
            let solver = SpdSolver {
                method,
                ..Default::default()
            };
            let x = solver.solve(&a, &b, None).unwrap();
            assert!(relative_residual(&a, &x, &b) <= SOLVE_TOL);
            for (p, q) in x.iter().zip(&x_true) {
                assert!((p - q).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn zero_rhs() {
        let a = laplacian_plus_identity(5);
        assert_eq!(solve_spd(&a, &[0.0; 5]).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn indefinite_matrix_fails() {
        let a = CsrMatrix::from_diagonal(&[1.0, -1.0]);
        assert!(matches!(solve_spd(&a, &[1.0, 1.0]), Err(Error::SolverFailure { .. })));
        let cg = SpdSolver {
            method: SolveMethod::ConjugateGradient,
            ..Default::default()
        };
        assert!(matches!(cg.solve(&a, &[0.0, 1.0], None), Err(Error::SolverFailure { .. })));
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let a = laplacian_plus_identity(60);
        let b = vec![1.0; 60];
        let cg = SpdSolver {
            method: SolveMethod::ConjugateGradient,
            max_iter: 2,
            ..Default::default()
        };
        match cg.solve(&a, &b, None) {
            Err(Error::SolverFailure { iterations, residual }) => {
                assert_eq!(iterations, 2);
                assert!(residual > SOLVE_TOL && residual.is_finite());
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch() {
        let a = CsrMatrix::from_diagonal(&[1.0, 1.0]);
        assert!(matches!(solve_spd(&a, &[1.0]), Err(Error::InvalidArgument(_))));
    }
}
