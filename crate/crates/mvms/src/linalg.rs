//! Dense helpers for the small matrices the toolkit touches (dimensions are
//! state-space sized, single digits): cyclic Jacobi eigendecomposition and a
//! clipped PSD square root.

/// Eigendecomposition of a symmetric matrix (row-major, n x n) by cyclic
/// Jacobi rotations. Returns (eigenvalues, eigenvectors column-major).
pub fn sym_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[i * n + j] * m[i * n + j];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let vals = (0..n).map(|i| m[i * n + i]).collect();
    (vals, v)
}

/// PSD square root by spectral decomposition, clipping negative eigenvalues
/// (sampling noise) to zero. Returns (sqrt matrix, clipped trace fraction).
pub fn psd_sqrt_clipped(a: &[f64], n: usize) -> (Vec<f64>, f64) {
    let (vals, vecs) = sym_eigen(a, n);
    let trace: f64 = vals.iter().sum();
    let clipped: f64 = vals.iter().filter(|v| **v < 0.0).map(|v| -v).sum();
    let mut out = vec![0.0; n * n];
    for (k, lam) in vals.iter().enumerate() {
        let r = lam.max(0.0).sqrt();
        if r == 0.0 {
            continue;
        }
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] += r * vecs[i * n + k] * vecs[j * n + k];
            }
        }
    }
    let frac = if trace.abs() > 0.0 { clipped / trace.abs().max(clipped) } else { 0.0 };
    (out, frac)
}

pub fn matmul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            let mut acc = 0.0;
            for l in 0..k {
                acc += a[i * k + l] * b[l * m + j];
            }
            out[i * m + j] = acc;
        }
    }
    out
}

pub fn frobenius_norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_recovers_known_spectrum() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3.
        let a = [2.0, 1.0, 1.0, 2.0];
        let (mut vals, _) = sym_eigen(&a, 2);
        vals.sort_by(f64::total_cmp);
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let a = [4.0, 2.0, 1.0, 2.0, 5.0, 0.5, 1.0, 0.5, 3.0];
        let (r, frac) = psd_sqrt_clipped(&a, 3);
        assert_eq!(frac, 0.0);
        let sq = matmul(&r, &r, 3, 3, 3);
        for (x, y) in sq.iter().zip(&a) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn negative_noise_eigenvalue_clipped() {
        let a = [1.0, 0.0, 0.0, -1e-6];
        let (r, frac) = psd_sqrt_clipped(&a, 2);
        assert!(frac > 0.0 && frac < 0.01);
        assert!((r[0] - 1.0).abs() < 1e-12);
        assert_eq!(r[3], 0.0);
    }
}
