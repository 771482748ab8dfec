//! Dense Hermitian eigensolver.
//!
//! Householder reduction to Hermitian tridiagonal form, a diagonal phase
//! change to a real symmetric tridiagonal matrix, then implicit QL with
//! Wilkinson-type shifts. The first component of every eigenvector is
//! available at `O(n^2)` extra cost: the reflectors never touch index 0, so
//! component 0 of an eigenvector equals component 0 of the tridiagonal one.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Dense Hermitian matrix stored row-major with both triangles populated.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix<T> {
    n: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> HermitianMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        HermitianMatrix {
            n,
            data: vec![Complex::new(T::zero(), T::zero()); n * n],
        }
    }

    /// Builds from row-major data, rejecting matrices that are not Hermitian
    /// within `1e-12` relative to the largest entry.
    pub fn from_row_major(n: usize, data: Vec<Complex<T>>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::InvalidInput(format!(
                "expected {} entries, got {}",
                n * n,
                data.len()
            )));
        }
        let m = HermitianMatrix { n, data };
        let scale = m.max_abs();
        if m.data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        if m.hermiticity_defect() > lit::<T>(1e-12) * scale {
            return Err(Error::InvalidInput("matrix is not Hermitian".into()));
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex<T> {
        self.data[i * self.n + j]
    }

    /// Sets entry `(i, j)` and its mirror `(j, i)`; diagonal entries keep only
    /// their real part.
    pub fn set(&mut self, i: usize, j: usize, value: Complex<T>) {
        if i == j {
            self.data[i * self.n + i] = Complex::new(value.re, T::zero());
        } else {
            self.data[i * self.n + j] = value;
            self.data[j * self.n + i] = value.conj();
        }
    }

    pub fn row(&self, i: usize) -> &[Complex<T>] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, z| acc.max(z.norm()))
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
    }

    /// `max |a_ij - conj(a_ji)|`.
    pub fn hermiticity_defect(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.n {
            for j in 0..=i {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    pub fn mul_vec(&self, v: &[Complex<T>]) -> Vec<Complex<T>> {
        (0..self.n)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .fold(Complex::new(T::zero(), T::zero()), |acc, (a, x)| acc + *a * *x)
            })
            .collect()
    }
}

/// Which eigenvector information to compute.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Vectors {
    /// Eigenvalues only.
    None,
    /// Eigenvalues and the first component of each unit eigenvector.
    FirstComponent,
    /// Eigenvalues and full unit eigenvectors.
    Full,
}

/// Eigen-decomposition with eigenvalues in nondecreasing order.
#[derive(Clone, Debug)]
pub struct HermitianEigen<T> {
    pub values: Vec<T>,
    /// `|v_i(0)|` for every eigenpair (empty unless requested).
    pub first_abs: Vec<T>,
    /// Unit eigenvectors, `vectors[i]` belongs to `values[i]` (empty unless
    /// requested).
    pub vectors: Vec<Vec<Complex<T>>>,
}

/// Eigenvalues and orthonormal eigenvectors of a Hermitian matrix.
pub fn eigensolve_hermitian<T: Real>(m: &HermitianMatrix<T>) -> Result<HermitianEigen<T>> {
    eigen_decompose(m, Vectors::Full)
}

pub fn eigen_decompose<T: Real>(m: &HermitianMatrix<T>, mode: Vectors) -> Result<HermitianEigen<T>> {
    let n = m.dim();
    if n == 0 {
        return Ok(HermitianEigen {
            values: Vec::new(),
            first_abs: Vec::new(),
            vectors: Vec::new(),
        });
    }
    let reduced = tridiagonalize(m);
    let mut d = reduced.diag.clone();
    let mut e: Vec<T> = reduced.offdiag_abs.clone();
    e.push(T::zero());

    let mut z = match mode {
        Vectors::Full => Rotations::Full(identity_columns(n)),
        Vectors::FirstComponent => {
            let mut row = vec![T::zero(); n];
            row[0] = T::one();
            Rotations::FirstRow(row)
        }
        Vectors::None => Rotations::Skip,
    };
    tridiagonal_ql(&mut d, &mut e, &mut z)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).expect("finite eigenvalues"));
    let values = order.iter().map(|&i| d[i]).collect();

    let (first_abs, vectors) = match z {
        Rotations::Skip => (Vec::new(), Vec::new()),
        Rotations::FirstRow(row) => (order.iter().map(|&i| row[i].abs()).collect(), Vec::new()),
        Rotations::Full(cols) => {
            let vectors: Vec<Vec<Complex<T>>> =
                order.iter().map(|&i| reduced.back_transform(&cols[i])).collect();
            let first = vectors.iter().map(|v| v[0].norm()).collect();
            (first, vectors)
        }
    };
    Ok(HermitianEigen {
        values,
        first_abs,
        vectors,
    })
}

struct Tridiagonal<T> {
    diag: Vec<T>,
    offdiag_abs: Vec<T>,
    /// Diagonal unitary making the tridiagonal form real.
    phases: Vec<Complex<T>>,
    /// Householder vectors `v_j` acting on indices `j+1..` with `tau_j`.
    reflectors: Vec<(Vec<Complex<T>>, T)>,
}

impl<T: Real> Tridiagonal<T> {
    /// Maps an eigenvector `z` of the real tridiagonal form back to the
    /// original basis: `Q D z`.
    fn back_transform(&self, z: &[T]) -> Vec<Complex<T>> {
        let mut y: Vec<Complex<T>> = z.iter().zip(&self.phases).map(|(&zi, &p)| p * zi).collect();
        for (j, (v, tau)) in self.reflectors.iter().enumerate().rev() {
            if v.is_empty() {
                continue;
            }
            let tail = &mut y[j + 1..];
            let s = v
                .iter()
                .zip(tail.iter())
                .fold(Complex::new(T::zero(), T::zero()), |acc, (vi, yi)| acc + vi.conj() * *yi);
            let s = s * *tau;
            for (yi, vi) in tail.iter_mut().zip(v) {
                *yi -= *vi * s;
            }
        }
        y
    }
}

fn tridiagonalize<T: Real>(m: &HermitianMatrix<T>) -> Tridiagonal<T> {
    let n = m.dim();
    let zero = Complex::new(T::zero(), T::zero());
    let mut a = m.data.clone();
    let mut sub: Vec<Complex<T>> = vec![zero; n.saturating_sub(1)];
    let mut reflectors = Vec::with_capacity(n.saturating_sub(2));
    let mut p = vec![zero; n];
    let half = lit::<T>(0.5);
    let two = lit::<T>(2.0);

    for j in 0..n.saturating_sub(2) {
        let len = n - j - 1;
        let mut v: Vec<Complex<T>> = (0..len).map(|k| a[(j + 1 + k) * n + j]).collect();
        let alpha = v.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
        if alpha.is_zero() {
            sub[j] = zero;
            reflectors.push((Vec::new(), T::zero()));
            continue;
        }
        let x0 = v[0];
        let x0_abs = x0.norm();
        let phase = if x0_abs.is_zero() {
            Complex::new(T::one(), T::zero())
        } else {
            x0 / x0_abs
        };
        v[0] += phase * alpha;
        let tau = two / (two * alpha * alpha + two * alpha * x0_abs);
        sub[j] = -phase * alpha;

        // p = tau * B v over the trailing block, exploiting Hermitian symmetry
        let off = j + 1;
        for x in p[..len].iter_mut() {
            *x = zero;
        }
        for r in 0..len {
            let row = &a[(off + r) * n + off..(off + r) * n + off + len];
            let mut acc = zero;
            for (bij, vj) in row.iter().zip(&v) {
                acc += *bij * *vj;
            }
            p[r] = acc * tau;
        }
        let vp = v
            .iter()
            .zip(&p[..len])
            .fold(zero, |acc, (vi, pi)| acc + vi.conj() * *pi);
        let kk = vp.re * tau * half;
        for r in 0..len {
            p[r] -= v[r] * kk;
        }
        // B -= v w^H + w v^H
        for r in 0..len {
            let vr = v[r];
            let wr = p[r];
            let row = &mut a[(off + r) * n + off..(off + r) * n + off + len];
            for (c, bij) in row.iter_mut().enumerate() {
                *bij -= vr * p[c].conj() + wr * v[c].conj();
            }
        }
        reflectors.push((v, tau));
    }
    if n >= 2 {
        sub[n - 2] = a[(n - 1) * n + (n - 2)];
    }

    let diag: Vec<T> = (0..n).map(|i| a[i * n + i].re).collect();
    let mut phases = Vec::with_capacity(n);
    phases.push(Complex::new(T::one(), T::zero()));
    let mut offdiag_abs = Vec::with_capacity(n.saturating_sub(1));
    for (i, ei) in sub.iter().enumerate() {
        let r = ei.norm();
        offdiag_abs.push(r);
        let next = if r.is_zero() { phases[i] } else { phases[i] * (*ei / r) };
        phases.push(next);
    }
    Tridiagonal {
        diag,
        offdiag_abs,
        phases,
        reflectors,
    }
}

enum Rotations<T> {
    Skip,
    FirstRow(Vec<T>),
    /// Column-major: `cols[j]` is eigenvector `j` of the tridiagonal form.
    Full(Vec<Vec<T>>),
}

fn identity_columns<T: Real>(n: usize) -> Vec<Vec<T>> {
    (0..n)
        .map(|j| {
            let mut c = vec![T::zero(); n];
            c[j] = T::one();
            c
        })
        .collect()
}

impl<T: Real> Rotations<T> {
    /// Applies the plane rotation mixing columns `i` and `i + 1`.
    #[inline]
    fn rotate(&mut self, i: usize, s: T, c: T) {
        match self {
            Rotations::Skip => {}
            Rotations::FirstRow(row) => {
                let f = row[i + 1];
                row[i + 1] = s * row[i] + c * f;
                row[i] = c * row[i] - s * f;
            }
            Rotations::Full(cols) => {
                let (left, right) = cols.split_at_mut(i + 1);
                let zi = &mut left[i];
                let zi1 = &mut right[0];
                for (a, b) in zi.iter_mut().zip(zi1.iter_mut()) {
                    let f = *b;
                    *b = s * *a + c * f;
                    *a = c * *a - s * f;
                }
            }
        }
    }
}

/// Implicit QL on a real symmetric tridiagonal matrix; `e[i]` couples `i` and
/// `i + 1` and `e[n-1]` is scratch.
fn tridiagonal_ql<T: Real>(d: &mut [T], e: &mut [T], z: &mut Rotations<T>) -> Result<()> {
    let n = d.len();
    let two = lit::<T>(2.0);
    let eps = T::epsilon();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= eps * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::NonConvergence {
                    residual: e[l].abs().to_f64().unwrap_or(f64::NAN),
                });
            }
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = g.hypot(T::one());
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (T::one(), T::one(), T::zero());
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r.is_zero() {
                    d[i + 1] -= p;
                    e[m] = T::zero();
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                z.rotate(i, s, c);
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n: usize, seed: u64) -> HermitianMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = HermitianMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let re = rng.gen_range(-1.0..1.0);
                let im = if i == j { 0.0 } else { rng.gen_range(-1.0..1.0) };
                m.set(i, j, Complex::new(re, im));
            }
        }
        m
    }

    fn max_residual(m: &HermitianMatrix<f64>, eig: &HermitianEigen<f64>) -> f64 {
        eig.values
            .iter()
            .zip(&eig.vectors)
            .map(|(&l, v)| {
                let mv = m.mul_vec(v);
                mv.iter()
                    .zip(v)
                    .map(|(a, b)| (*a - *b * l).norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn diagonal_matrix_sorted_with_coordinate_vectors() {
        let diag = [3.0, -1.0, 2.0, 0.5];
        let mut m = HermitianMatrix::zeros(4);
        for (i, &x) in diag.iter().enumerate() {
            m.set(i, i, Complex::new(x, 0.0));
        }
        let eig = eigensolve_hermitian(&m).unwrap();
        assert_eq!(eig.values, vec![-1.0, 0.5, 2.0, 3.0]);
        let expected_index = [1, 3, 2, 0];
        for (v, &idx) in eig.vectors.iter().zip(&expected_index) {
            for (k, z) in v.iter().enumerate() {
                let target: f64 = if k == idx { 1.0 } else { 0.0 };
                assert!((z.norm() - target).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn two_by_two_closed_form() {
        let (a, b): (f64, f64) = (0.3, -0.2);
        let g = Complex::new(0.1, -0.25);
        let mut m = HermitianMatrix::zeros(2);
        m.set(0, 0, Complex::new(a, 0.0));
        m.set(1, 1, Complex::new(b, 0.0));
        m.set(0, 1, g);
        let eig = eigensolve_hermitian(&m).unwrap();
        let mid = (a + b) / 2.0;
        let rad = ((a - b) * (a - b) / 4.0 + g.norm_sqr()).sqrt();
        assert!((eig.values[0] - (mid - rad)).abs() < 1e-15);
        assert!((eig.values[1] - (mid + rad)).abs() < 1e-15);
    }

    #[test]
    fn random_hermitian_residuals_and_orthonormality() {
        let m = random_hermitian(50, 7);
        let eig = eigensolve_hermitian(&m).unwrap();
        let norm = m.frobenius_norm();
        assert!(max_residual(&m, &eig) <= 1e-10 * norm);
        for w in eig.values.windows(2) {
            assert!(w[0] <= w[1]);
        }
        for i in 0..50 {
            for j in 0..50 {
                let dot = eig.vectors[i]
                    .iter()
                    .zip(&eig.vectors[j])
                    .fold(Complex::new(0.0, 0.0), |acc, (a, b)| acc + a.conj() * *b);
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((dot - target).norm() < 1e-12, "({i},{j}) -> {dot}");
            }
        }
    }

    #[test]
    fn agrees_with_nalgebra() {
        for seed in 0..4 {
            let n = 23 + seed as usize * 11;
            let m = random_hermitian(n, 100 + seed);
            let ours = eigen_decompose(&m, Vectors::None).unwrap().values;
            let dense = nalgebra::DMatrix::from_fn(n, n, |i, j| {
                let z = m.get(i, j);
                nalgebra::Complex::new(z.re, z.im)
            });
            let mut theirs: Vec<f64> = dense.symmetric_eigenvalues().iter().copied().collect();
            theirs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (a, b) in ours.iter().zip(&theirs) {
                assert!((a - b).abs() < 1e-11, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn modes_agree() {
        let m = random_hermitian(30, 3);
        let full = eigen_decompose(&m, Vectors::Full).unwrap();
        let first = eigen_decompose(&m, Vectors::FirstComponent).unwrap();
        let none = eigen_decompose(&m, Vectors::None).unwrap();
        assert_eq!(full.values, first.values);
        assert_eq!(full.values, none.values);
        for (a, b) in full.first_abs.iter().zip(&first.first_abs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_precision_smoke() {
        let mut m = HermitianMatrix::<f32>::zeros(3);
        m.set(0, 0, Complex::new(1.0, 0.0));
        m.set(1, 1, Complex::new(2.0, 0.0));
        m.set(2, 2, Complex::new(3.0, 0.0));
        m.set(0, 1, Complex::new(0.0, 0.5));
        m.set(1, 2, Complex::new(0.25, 0.0));
        let eig = eigensolve_hermitian(&m).unwrap();
        let trace: f32 = eig.values.iter().sum();
        assert!((trace - 6.0).abs() < 1e-5);
    }

    #[test]
    fn rejects_non_hermitian_input() {
        let data = vec![
            Complex::new(1.0, 0.0),
            Complex::new(0.0, 1.0),
            Complex::new(0.0, 1.0),
            Complex::new(2.0, 0.0),
        ];
        assert!(HermitianMatrix::from_row_major(2, data).is_err());
    }
}
