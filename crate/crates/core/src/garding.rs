//! Hermitian matrices, elementary symmetric functions of their eigenvalues
//! and membership in the Gårding cones Γ^m.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{arg, LabError, Result};

pub type C64 = Complex64;

pub const DEFAULT_CONE_TOLERANCE: f64 = 1e-9;

/// Largest dimension accepted by [`sigma_minors`] (subset enumeration).
pub const MAX_MINOR_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    dim: usize,
    entries: Vec<C64>,
}

impl HermitianMatrix {
    /// Row-major entries; the result is the Hermitian part `(A + A*)/2`.
    pub fn new(dim: usize, entries: Vec<C64>) -> Result<Self> {
        if dim == 0 || entries.len() != dim * dim {
            return arg(format!("expected {}x{} entries, got {}", dim, dim, entries.len()));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return arg("non-finite matrix entry");
        }
        let mut h = vec![C64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                h[i * dim + j] = 0.5 * (entries[i * dim + j] + entries[j * dim + i].conj());
            }
        }
        Ok(HermitianMatrix { dim, entries: h })
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> C64) -> Result<Self> {
        let mut e = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                e.push(f(i, j));
            }
        }
        Self::new(dim, e)
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        let n = values.len();
        Self::from_fn(n, |i, j| if i == j { C64::new(values[i], 0.0) } else { C64::new(0.0, 0.0) })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::diagonal(&vec![1.0; dim])
    }

    pub fn from_dmatrix(m: &DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return arg("matrix is not square");
        }
        Self::from_fn(m.nrows(), |i, j| m[(i, j)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.entries[i * self.dim + j]
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    pub fn to_dmatrix(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    pub fn scaled(&self, c: f64) -> Self {
        HermitianMatrix { dim: self.dim, entries: self.entries.iter().map(|z| z * c).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return arg("dimension mismatch");
        }
        Ok(HermitianMatrix {
            dim: self.dim,
            entries: self.entries.iter().zip(&other.entries).map(|(a, b)| a + b).collect(),
        })
    }

    /// `U* H U`.
    pub fn conjugate_by(&self, u: &DMatrix<C64>) -> Result<Self> {
        if u.nrows() != self.dim || u.ncols() != self.dim {
            return arg("unitary has wrong shape");
        }
        let m = u.adjoint() * self.to_dmatrix() * u;
        Self::from_dmatrix(&m)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.to_dmatrix().symmetric_eigenvalues().iter().cloned().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    pub fn operator_norm(&self) -> f64 {
        self.eigenvalues().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i).re).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.entries.iter().zip(&other.entries).fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }
}

fn complex_det(a: &mut [C64], n: usize) -> C64 {
    let mut det = C64::new(1.0, 0.0);
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].norm();
        for row in col + 1..n {
            let v = a[row * n + col].norm();
            if v > best {
                best = v;
                piv = row;
            }
        }
        if best == 0.0 {
            return C64::new(0.0, 0.0);
        }
        if piv != col {
            for c in 0..n {
                a.swap(piv * n + c, col * n + c);
            }
            det = -det;
        }
        let p = a[col * n + col];
        det *= p;
        for row in col + 1..n {
            let f = a[row * n + col] / p;
            if f.norm() == 0.0 {
                continue;
            }
            for c in col + 1..n {
                let t = a[col * n + c];
                a[row * n + c] -= f * t;
            }
        }
    }
    det
}

/// `σ_1, …, σ_upto` of the eigenvalues, via sums of principal minors.
/// Entry `j − 1` holds `σ_j`.
pub fn sigma_all(h: &HermitianMatrix, upto: usize) -> Result<Vec<f64>> {
    let n = h.dim();
    if n > MAX_MINOR_DIM {
        return arg(format!("dimension {} exceeds {}", n, MAX_MINOR_DIM));
    }
    if upto == 0 || upto > n {
        return arg(format!("order {} outside 1..={}", upto, n));
    }
    let mut sums = vec![0.0; upto];
    let mut idx = Vec::with_capacity(n);
    let mut buf = Vec::with_capacity(n * n);
    for mask in 1u32..(1u32 << n) {
        let size = mask.count_ones() as usize;
        if size > upto {
            continue;
        }
        idx.clear();
        idx.extend((0..n).filter(|i| mask & (1 << i) != 0));
        buf.clear();
        for &i in &idx {
            for &j in &idx {
                buf.push(h.get(i, j));
            }
        }
        sums[size - 1] += complex_det(&mut buf, size).re;
    }
    Ok(sums)
}

pub fn sigma_minors(h: &HermitianMatrix, j: usize) -> Result<f64> {
    if j == 0 || j > h.dim() {
        return arg(format!("j = {} outside 1..={}", j, h.dim()));
    }
    Ok(sigma_all(h, j)?[j - 1])
}

/// Elementary symmetric polynomial `e_j` of `values` (`e_0 = 1`).
pub fn elementary_symmetric(values: &[f64], j: usize) -> f64 {
    if j > values.len() {
        return 0.0;
    }
    let mut e = vec![0.0; j + 1];
    e[0] = 1.0;
    for (count, v) in values.iter().enumerate() {
        for d in (1..=j.min(count + 1)).rev() {
            e[d] += v * e[d - 1];
        }
    }
    e[j]
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

/// Eigenvalue profile of the complex Hessian of a function of `r = |z'|` in
/// the flat model: one radial eigenvalue, `k − 1` tangential ones and `n − k`
/// zeros along V.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenProfile {
    pub lambda_rad: f64,
    pub lambda_tan: f64,
    pub k: usize,
    pub n: usize,
}

impl EigenProfile {
    pub fn new(lambda_rad: f64, lambda_tan: f64, k: usize, n: usize) -> Result<Self> {
        if k == 0 || k > n {
            return arg(format!("need 1 <= k <= n, got k = {}, n = {}", k, n));
        }
        Ok(EigenProfile { lambda_rad, lambda_tan, k, n })
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v = vec![self.lambda_rad];
        v.extend(std::iter::repeat(self.lambda_tan).take(self.k - 1));
        v.extend(std::iter::repeat(0.0).take(self.n - self.k));
        v
    }

    pub fn to_matrix(&self) -> Result<HermitianMatrix> {
        HermitianMatrix::diagonal(&self.eigenvalues())
    }
}

pub fn sigma_profile(p: &EigenProfile, j: usize) -> Result<f64> {
    if j == 0 || j > p.n {
        return arg(format!("j = {} outside 1..={}", j, p.n));
    }
    let k = p.k;
    if j > k {
        return Ok(0.0);
    }
    Ok(p.lambda_rad * binomial(k - 1, j - 1) * p.lambda_tan.powi(j as i32 - 1)
        + binomial(k - 1, j) * p.lambda_tan.powi(j as i32))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConeStatus {
    StrictlyInside,
    Boundary,
    Outside,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeVerdict {
    pub status: ConeStatus,
    /// Index `j` attaining the smallest normalized `σ_j`.
    pub worst_index: usize,
    /// `min_j σ_j / ‖H‖^j`.
    pub margin: f64,
}

pub fn gamma_m_test(h: &HermitianMatrix, m: usize, tolerance: f64) -> Result<ConeVerdict> {
    gamma_m_test_with_floor(h, m, tolerance, 0.0)
}

/// Cone test where `‖H‖ ≤ zero_floor` counts as the zero matrix (boundary).
/// Used by finite-difference scans, where `zero_floor` is the noise level.
pub fn gamma_m_test_with_floor(h: &HermitianMatrix, m: usize, tolerance: f64, zero_floor: f64) -> Result<ConeVerdict> {
    if m == 0 || m > h.dim() {
        return arg(format!("m = {} outside 1..={}", m, h.dim()));
    }
    if !(tolerance >= 0.0) {
        return arg("tolerance must be nonnegative");
    }
    let norm = h.operator_norm();
    if norm == 0.0 || norm <= zero_floor {
        return Ok(ConeVerdict { status: ConeStatus::Boundary, worst_index: 1, margin: 0.0 });
    }
    let sig = sigma_all(h, m)?;
    let mut margin = f64::INFINITY;
    let mut worst = 1;
    for (i, s) in sig.iter().enumerate() {
        let v = s / norm.powi(i as i32 + 1);
        if v < margin {
            margin = v;
            worst = i + 1;
        }
    }
    let status = if margin > tolerance {
        ConeStatus::StrictlyInside
    } else if margin >= -tolerance {
        ConeStatus::Boundary
    } else {
        ConeStatus::Outside
    };
    Ok(ConeVerdict { status, worst_index: worst, margin })
}

/// `Σ_i a_i σ_{m−1}(b with index i removed)`: the mixed density of two
/// simultaneously diagonal Hessians.
pub fn mixed_sigma_diag(a: &[f64], b: &[f64], m: usize) -> Result<f64> {
    if a.len() != b.len() {
        return Err(LabError::Argument(format!("length mismatch {} vs {}", a.len(), b.len())));
    }
    let n = a.len();
    if m == 0 || m > n {
        return arg(format!("m = {} outside 1..={}", m, n));
    }
    let mut total = 0.0;
    let mut rest = Vec::with_capacity(n);
    for i in 0..n {
        if a[i] == 0.0 {
            continue;
        }
        rest.clear();
        rest.extend(b.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v));
        total += a[i] * elementary_symmetric(&rest, m - 1);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_sigma() {
        let h = HermitianMatrix::identity(3).unwrap();
        assert!((sigma_minors(&h, 2).unwrap() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn log_profile_sigma_two_vanishes() {
        let h = HermitianMatrix::diagonal(&[0.0, 0.5, 0.0, 0.0]).unwrap();
        assert_eq!(sigma_minors(&h, 2).unwrap(), 0.0);
        let h = HermitianMatrix::diagonal(&[-0.25, 0.5, 0.5]).unwrap();
        assert!(sigma_minors(&h, 2).unwrap().abs() < 1e-15);
    }

    #[test]
    fn profile_examples() {
        let p = EigenProfile::new(-0.5, 1.0, 3, 3).unwrap();
        assert!(sigma_profile(&p, 2).unwrap().abs() < 1e-15);
        let p = EigenProfile::new(0.0, 0.5, 2, 2).unwrap();
        assert_eq!(sigma_profile(&p, 1).unwrap(), 0.5);
        let p = EigenProfile::new(1.0, 1.0, 2, 2).unwrap();
        assert_eq!(sigma_profile(&p, 2).unwrap(), 1.0);
        assert!(sigma_profile(&p, 3).is_err());
    }

    #[test]
    fn cone_examples() {
        let v = gamma_m_test(&HermitianMatrix::identity(4).unwrap(), 3, DEFAULT_CONE_TOLERANCE).unwrap();
        assert_eq!(v.status, ConeStatus::StrictlyInside);
        let h = HermitianMatrix::diagonal(&[-1.0, 1.0, 1.0]).unwrap();
        assert_eq!(gamma_m_test(&h, 1, 1e-9).unwrap().status, ConeStatus::StrictlyInside);
        let v = gamma_m_test(&h, 2, 1e-9).unwrap();
        assert_eq!(v.status, ConeStatus::Outside);
        assert_eq!(v.worst_index, 2);
        let h = HermitianMatrix::diagonal(&[-0.25, 0.5, 0.5, 0.0]).unwrap();
        assert_eq!(gamma_m_test(&h, 2, 1e-9).unwrap().status, ConeStatus::Boundary);
    }

    #[test]
    fn mixed_examples() {
        assert!((mixed_sigma_diag(&[1.0; 3], &[1.0; 3], 2).unwrap() - 6.0).abs() < 1e-15);
        let v = mixed_sigma_diag(&[-0.25, 0.5, 0.5, 0.0], &[1.0, 1.0, 1.0, 0.0], 2).unwrap();
        assert!((v - 1.5).abs() < 1e-15);
        assert_eq!(mixed_sigma_diag(&[3.0, -2.0, 1.0], &[0.0; 3], 2).unwrap(), 0.0);
        assert!(mixed_sigma_diag(&[1.0], &[1.0, 2.0], 1).is_err());
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(3, 0), 1.0);
        assert_eq!(binomial(2, 3), 0.0);
    }
}
