//! Floquet dispersion `E(k)` by Fourier-Galerkin truncation.
//!
//! Plane waves are `exp(i x (n.omega + k))`, so the free dispersion is `k^2`
//! and the truncated operator on the box `|n|_1 <= N` has entries
//! `(n.omega + k)^2 [n = n'] + c(n - n')`.

use std::collections::{BTreeMap, HashMap};

use num_complex::Complex;

use crate::eigen::{eigen_decompose, HermitianEigen, HermitianMatrix, Vectors};
use crate::error::{Error, Result};
use crate::lattice::{nonzero_ball, LatticeBox, LatticePoint};
use crate::potential::FourierPotential;
use crate::resonance::{build_cluster, cluster_from_indices, delta, k_point, resonant_indices};
use crate::scalar::{lit, Real};

pub const DEFAULT_DIMENSION_CAP: usize = 20_000;

/// Minimal gap between the two largest `|v(0)|` before selection is ambiguous.
pub const SELECTION_MARGIN: f64 = 1e-3;

const RICHARDSON_DEPTH: usize = 5;

/// Truncated Floquet operator at quasi-momentum `k`.
#[derive(Clone, Debug)]
pub struct GalerkinOperator<T> {
    pub k: T,
    pub lattice: LatticeBox,
    pub matrix: HermitianMatrix<T>,
}

impl<T: Real> GalerkinOperator<T> {
    pub fn radius(&self) -> u64 {
        self.lattice.radius()
    }

    pub fn dim(&self) -> usize {
        self.lattice.len()
    }
}

pub fn build_matrix<T: Real>(p: &FourierPotential<T>, k: T, radius: u64) -> Result<GalerkinOperator<T>> {
    build_matrix_capped(p, k, radius, DEFAULT_DIMENSION_CAP)
}

pub fn build_matrix_capped<T: Real>(
    p: &FourierPotential<T>,
    k: T,
    radius: u64,
    cap: usize,
) -> Result<GalerkinOperator<T>> {
    if radius == 0 {
        return Err(Error::InvalidInput("box radius must be at least 1".into()));
    }
    let nu = p.nu();
    let dim = LatticeBox::size_of(nu, radius);
    if dim > cap {
        return Err(Error::DimensionCap { dim, cap });
    }
    let lattice = LatticeBox::new(nu, radius);
    let omega = p.freq().omega();
    let mut matrix = HermitianMatrix::zeros(dim);
    for (i, n) in lattice.points().iter().enumerate() {
        let w = n.dot(omega) + k;
        matrix.set(i, i, Complex::new(w * w, T::zero()));
        for (d, c) in p.coeffs() {
            // entry(n, n - d) = c(d); the mirror is written by `set`
            let target = n - d;
            if let Some(j) = lattice.index_of(&target) {
                if j < i {
                    matrix.set(i, j, *c);
                }
            }
        }
    }
    Ok(GalerkinOperator { k, lattice, matrix })
}

/// One point of the dispersion relation with its normalized Floquet vector.
#[derive(Clone, Debug)]
pub struct DispersionSample<T> {
    pub k: T,
    pub energy: T,
    /// `phi(n; k)` on the box with `phi(0; k) = 1`.
    pub phi: BTreeMap<LatticePoint, Complex<T>>,
    /// `|E_N - E_2N|`.
    pub trunc_error: T,
    pub radius: u64,
}

impl<T: Real> DispersionSample<T> {
    pub fn phi_at(&self, n: &LatticePoint) -> Complex<T> {
        self.phi
            .get(n)
            .copied()
            .unwrap_or_else(|| Complex::new(T::zero(), T::zero()))
    }
}

/// Index of the eigenpair with dominant component at the origin.
fn select_dominant<T: Real>(eig: &HermitianEigen<T>, k: T) -> Result<usize> {
    let k2 = k * k;
    let mut order: Vec<usize> = (0..eig.values.len()).collect();
    order.sort_by(|&a, &b| {
        eig.first_abs[b]
            .partial_cmp(&eig.first_abs[a])
            .expect("finite")
            .then_with(|| {
                let da = (eig.values[a] - k2).abs();
                let db = (eig.values[b] - k2).abs();
                da.partial_cmp(&db).expect("finite")
            })
    });
    let best = order[0];
    if let Some(&second) = order.get(1) {
        let (a, b) = (eig.first_abs[best], eig.first_abs[second]);
        if a - b < lit(SELECTION_MARGIN) {
            return Err(Error::AmbiguousSelection {
                k: k.to_f64().unwrap_or(f64::NAN),
                first: a.to_f64().unwrap_or(f64::NAN),
                second: b.to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    Ok(best)
}

/// Dominant-origin eigenvalue without eigenvectors or refinement.
pub fn dominant_energy<T: Real>(p: &FourierPotential<T>, k: T, radius: u64) -> Result<T> {
    let op = build_matrix(p, k, radius)?;
    let eig = eigen_decompose(&op.matrix, Vectors::FirstComponent)?;
    let i = select_dominant(&eig, k)?;
    Ok(eig.values[i])
}

pub fn dispersion_at<T: Real>(p: &FourierPotential<T>, k: T, radius: u64) -> Result<DispersionSample<T>> {
    let op = build_matrix(p, k, radius)?;
    let eig = eigen_decompose(&op.matrix, Vectors::Full)?;
    let i = select_dominant(&eig, k)?;
    let v = &eig.vectors[i];
    let v0 = v[0];
    let mut phi: BTreeMap<LatticePoint, Complex<T>> = op
        .lattice
        .points()
        .iter()
        .zip(v)
        .map(|(n, z)| (n.clone(), *z / v0))
        .collect();
    phi.insert(LatticePoint::zero(p.nu()), Complex::new(T::one(), T::zero()));
    let energy = eig.values[i];
    let refined = dominant_energy(p, k, 2 * radius)?;
    Ok(DispersionSample {
        k,
        energy,
        phi,
        trunc_error: (energy - refined).abs(),
        radius,
    })
}

/// Edges of the gap opened at `k_m`.
#[derive(Clone, Debug, PartialEq)]
pub struct GapEdges<T> {
    /// Canonical label.
    pub label: LatticePoint,
    /// `|k_m|`.
    pub k: T,
    pub e_minus: T,
    pub e_plus: T,
    pub err: T,
    pub closed: bool,
    /// Raw edges at `k_m` (two-level selection).
    pub direct: (T, T),
    /// One-sided limits by extrapolation.
    pub extrapolated: (T, T),
    pub trunc_error: T,
    pub cluster_size: usize,
    /// Resonant indices with equal norms were met.
    pub tie: bool,
}

impl<T: Real> GapEdges<T> {
    pub fn width(&self) -> T {
        self.e_plus - self.e_minus
    }
}

/// `m~ = +-m` with `k_m~ > 0`, and `k_m~`.
pub fn positive_partner<T: Real>(m: &LatticePoint, p: &FourierPotential<T>) -> Result<(LatticePoint, T)> {
    let km = k_point(m, p.freq())?;
    if km.is_zero() {
        return Err(Error::RationallyDependent(m.clone()));
    }
    if km > T::zero() {
        Ok((m.clone(), km))
    } else {
        Ok((-m, -km))
    }
}

/// Polynomial through `(x_j, y_j)` evaluated at 0.
pub fn extrapolate_to_zero<T: Real>(xs: &[T], ys: &[T]) -> T {
    let mut p = ys.to_vec();
    let n = xs.len();
    for level in 1..n {
        for i in 0..n - level {
            let (xi, xj) = (xs[i], xs[i + level]);
            p[i] = (xj * p[i] - xi * p[i + 1]) / (xj - xi);
        }
    }
    p[0]
}

pub fn gap_edges<T: Real>(p: &FourierPotential<T>, m: &LatticePoint, radius: u64) -> Result<GapEdges<T>> {
    if m.is_zero() {
        return Err(Error::ZeroLabel);
    }
    if m.dim() != p.nu() {
        return Err(Error::DimensionMismatch(m.clone(), m.dim(), p.nu()));
    }
    if m.norm1() > radius {
        return Err(Error::InvalidInput(format!(
            "label {m} lies outside the box of radius {radius}"
        )));
    }
    let (partner, k) = positive_partner(m, p)?;
    let freq = p.freq();

    let cluster = build_cluster(k, freq, radius)?;
    let op = build_matrix(p, k, radius)?;
    if cluster.cluster.len() > op.dim() {
        return Err(Error::ClusterOverlap(m.canonical()));
    }
    let eig = eigen_decompose(&op.matrix, Vectors::Full)?;
    let j = op.lattice.index_of(&partner).expect("partner inside box");
    let mass: Vec<T> = eig
        .vectors
        .iter()
        .map(|v| v[0].norm_sqr() + v[j].norm_sqr())
        .collect();
    let mut order: Vec<usize> = (0..mass.len()).collect();
    order.sort_by(|&a, &b| mass[b].partial_cmp(&mass[a]).expect("finite"));
    let (i1, i2) = (order[0], order[1]);
    if mass[i1] + mass[i2] < lit(1.8) {
        return Err(Error::ModeSelection(m.canonical()));
    }
    let (d_minus, d_plus) = {
        let (a, b) = (eig.values[i1], eig.values[i2]);
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    };

    // truncation: same two levels at twice the radius
    let refined = eigen_decompose(&build_matrix(p, k, 2 * radius)?.matrix, Vectors::None)?;
    let nearest = |target: T| {
        refined
            .values
            .iter()
            .fold(T::infinity(), |best, &x| best.min((x - target).abs()))
    };
    let trunc = nearest(d_minus).max(nearest(d_plus));

    // one-sided limits
    let width = d_plus - d_minus;
    let floor = lit::<T>(1e-12);
    let eta0 = (delta(m, freq)? / lit(4.0))
        .min(lit(1e-2))
        .min((width / (lit::<T>(16.0) * k)).max(floor));
    let mut etas = Vec::with_capacity(RICHARDSON_DEPTH);
    let mut lower = Vec::with_capacity(RICHARDSON_DEPTH);
    let mut upper = Vec::with_capacity(RICHARDSON_DEPTH);
    let mut eta = eta0;
    for _ in 0..RICHARDSON_DEPTH {
        etas.push(eta);
        lower.push(branch_energy(p, k - eta, radius, d_minus)?);
        upper.push(branch_energy(p, k + eta, radius, d_plus)?);
        eta = eta / lit(2.0);
    }
    let x_minus = extrapolate_to_zero(&etas, &lower);
    let x_plus = extrapolate_to_zero(&etas, &upper);

    let mut err = trunc
        .max((x_minus - d_minus).abs())
        .max((x_plus - d_plus).abs());
    let threshold = lit::<T>(1e-12).max(lit::<T>(10.0) * err);
    let closed = width <= threshold;
    let (e_minus, e_plus) = if closed {
        let mid = (d_minus + d_plus) / lit(2.0);
        err += width / lit(2.0);
        (mid, mid)
    } else {
        (d_minus, d_plus)
    };
    Ok(GapEdges {
        label: m.canonical(),
        k,
        e_minus,
        e_plus,
        err,
        closed,
        direct: (d_minus, d_plus),
        extrapolated: (x_minus, x_plus),
        trunc_error: trunc,
        cluster_size: cluster.cluster.len(),
        tie: cluster.tie,
    })
}

/// Dispersion branch just off a resonance point; falls back to the eigenvalue
/// nearest `hint` when the origin weight is split too evenly to decide.
fn branch_energy<T: Real>(p: &FourierPotential<T>, k: T, radius: u64, hint: T) -> Result<T> {
    let op = build_matrix(p, k, radius)?;
    let eig = eigen_decompose(&op.matrix, Vectors::FirstComponent)?;
    match select_dominant(&eig, k) {
        Ok(i) => Ok(eig.values[i]),
        Err(Error::AmbiguousSelection { .. }) => Ok(eig
            .values
            .iter()
            .copied()
            .fold((T::infinity(), T::zero()), |(bd, bx), x| {
                let d = (x - hint).abs();
                if d < bd {
                    (d, x)
                } else {
                    (bd, bx)
                }
            })
            .1),
        Err(e) => Err(e),
    }
}

/// Outcome of the two-sided monotonicity check on `(k1, k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DispersionBoundsReport<T> {
    pub k1: T,
    pub k: T,
    pub eps0: T,
    /// `min(eps0, k/1024)`.
    pub k0: T,
    pub e_k1: T,
    pub e_k: T,
    pub lower: T,
    pub upper: T,
    /// `2 eps sum delta(n)` over resonance points in `(k1, k)`.
    pub resonance_allowance: T,
    pub resonance_points: Vec<LatticePoint>,
    pub lower_margin: T,
    pub upper_margin: T,
    /// `trunc_error(k) + trunc_error(k1)`.
    pub numerical_error: T,
    pub holds: bool,
}

pub fn verify_dispersion_bounds<T: Real>(
    p: &FourierPotential<T>,
    k1: T,
    k: T,
    eps0: T,
    radius: u64,
) -> Result<DispersionBoundsReport<T>> {
    let step = k - k1;
    if !(k1 > T::zero() && step > T::zero() && step < lit(0.25)) {
        return Err(Error::InvalidInput(format!(
            "need k1 > 0 and 0 < k - k1 < 1/4, got k1 = {k1}, k = {k}"
        )));
    }
    if !(eps0 > T::zero()) {
        return Err(Error::InvalidInput("eps0 must be positive".into()));
    }
    let s1 = dispersion_at(p, k1, radius)?;
    let s = dispersion_at(p, k, radius)?;
    let freq = p.freq();
    let two = lit::<T>(2.0);
    let mut resonance_points = Vec::new();
    let mut sum = T::zero();
    for n in nonzero_ball(p.nu(), radius) {
        let kn = -freq.dot(&n) / two;
        if kn > k1 && kn < k {
            sum += delta(&n, freq)?;
            resonance_points.push(n);
        }
    }
    let k0 = eps0.min(k / lit(1024.0));
    let diff = s.energy - s1.energy;
    let lower = k0 * k0 * step * step;
    let allowance = two * p.eps() * sum;
    let upper = two * k * step + allowance;
    let lower_margin = diff - lower;
    let upper_margin = upper - diff;
    let numerical_error = s.trunc_error + s1.trunc_error;
    Ok(DispersionBoundsReport {
        k1,
        k,
        eps0,
        k0,
        e_k1: s1.energy,
        e_k: s.energy,
        lower,
        upper,
        resonance_allowance: allowance,
        resonance_points,
        lower_margin,
        upper_margin,
        numerical_error,
        holds: lower_margin > numerical_error && upper_margin > numerical_error,
    })
}

/// `max_x |-psi'' + V psi - E psi|` for the truncated Floquet solution.
pub fn floquet_residual<T: Real>(p: &FourierPotential<T>, s: &DispersionSample<T>, xs: &[T]) -> T {
    let omega = p.freq().omega();
    let zero = Complex::new(T::zero(), T::zero());
    xs.iter()
        .map(|&x| {
            let mut psi = zero;
            let mut minus_psi2 = zero;
            for (n, c) in &s.phi {
                let w = n.dot(omega) + s.k;
                let wave = Complex::from_polar(T::one(), x * w) * *c;
                psi += wave;
                minus_psi2 += wave * (w * w);
            }
            (minus_psi2 + psi * p.eval_complex(x) - psi * s.energy).norm()
        })
        .fold(T::zero(), |a, b| a.max(b))
}

/// l1 norm of the Fourier coefficients of `(H - E) psi`; bounds the pointwise
/// residual for every `x`.
pub fn fourier_residual_l1<T: Real>(p: &FourierPotential<T>, s: &DispersionSample<T>) -> T {
    let omega = p.freq().omega();
    let zero = Complex::new(T::zero(), T::zero());
    let mut out: HashMap<LatticePoint, Complex<T>> = HashMap::new();
    for (n, phi) in &s.phi {
        let w = n.dot(omega) + s.k;
        *out.entry(n.clone()).or_insert(zero) += *phi * (w * w - s.energy);
        for (d, c) in p.coeffs() {
            *out.entry(n + d).or_insert(zero) += *c * *phi;
        }
    }
    out.values().map(|z| z.norm()).sum()
}

/// Worst ratio of `|phi(n)|` to the decay envelope off the resonance cluster.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvelopeCheck<T> {
    pub cluster_size: usize,
    /// `max |phi(m)|` over the cluster (bound 2).
    pub cluster_max: T,
    /// `max (|phi(n)| - trunc) / envelope(n)` off the cluster (bound 1).
    pub worst_ratio: T,
    pub worst_n: Option<LatticePoint>,
}

impl<T: Real> EnvelopeCheck<T> {
    pub fn holds(&self) -> bool {
        self.cluster_max <= lit(2.0) && self.worst_ratio <= T::one()
    }
}

/// Envelope `sqrt(eps) sum_{m in cluster} exp(-7/8 kappa0 |n - m|_1)`.
pub fn check_decay_envelope<T: Real>(p: &FourierPotential<T>, s: &DispersionSample<T>) -> EnvelopeCheck<T> {
    let set = resonant_indices(s.k, p.freq(), s.radius);
    let cluster = cluster_from_indices(p.nu(), &set.indices);
    let rate = lit::<T>(7.0 / 8.0) * p.kappa0();
    let root = p.eps().sqrt();
    let mut cluster_max = T::zero();
    let mut worst_ratio = T::neg_infinity();
    let mut worst_n = None;
    for (n, phi) in &s.phi {
        let a = phi.norm();
        if cluster.contains(n) {
            cluster_max = cluster_max.max(a);
            continue;
        }
        let env: T = cluster
            .iter()
            .map(|m| (-rate * lit::<T>((n - m).norm1() as f64)).exp())
            .sum::<T>()
            * root;
        let ratio = (a - s.trunc_error).max(T::zero()) / env;
        if ratio > worst_ratio {
            worst_ratio = ratio;
            worst_n = Some(n.clone());
        }
    }
    EnvelopeCheck {
        cluster_size: cluster.len(),
        cluster_max,
        worst_ratio: worst_ratio.max(T::zero()),
        worst_n,
    }
}
