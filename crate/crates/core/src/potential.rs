//! Quasi-periodic potentials `V(x) = sum_n c(n) exp(i (n.omega) x)` and the
//! hypotheses they are expected to satisfy.
//!
//! Plane waves use the rescaled convention `exp(i x (n.omega + k))`, so the
//! free dispersion is exactly `k^2`.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::lattice::{shell, LatticePoint};
use crate::scalar::{from_i64, lit, Real};

/// Frequency vector together with its Diophantine parameters `a0`, `b0`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyVector<T> {
    omega: Vec<T>,
    a0: T,
    b0: T,
}

impl<T: Real> FrequencyVector<T> {
    pub fn new(omega: Vec<T>, a0: T, b0: T) -> Result<Self> {
        if omega.is_empty() {
            return Err(Error::InvalidInput("nu must be at least 1".into()));
        }
        if omega.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidInput("omega has non-finite components".into()));
        }
        if omega.iter().all(|w| w.is_zero()) {
            return Err(Error::InvalidInput("omega is identically zero".into()));
        }
        if !(a0 > T::zero() && a0 < T::one()) {
            return Err(Error::InvalidInput(format!("a0 = {a0} must lie in (0, 1)")));
        }
        let nu = from_i64::<T>(omega.len() as i64);
        if !(b0 > nu) || !b0.is_finite() {
            return Err(Error::InvalidInput(format!(
                "b0 = {b0} must satisfy nu < b0 < infinity (nu = {})",
                omega.len()
            )));
        }
        Ok(FrequencyVector { omega, a0, b0 })
    }

    pub fn nu(&self) -> usize {
        self.omega.len()
    }

    pub fn omega(&self) -> &[T] {
        &self.omega
    }

    pub fn a0(&self) -> T {
        self.a0
    }

    pub fn b0(&self) -> T {
        self.b0
    }

    /// `n . omega`.
    pub fn dot(&self, n: &LatticePoint) -> T {
        n.dot(&self.omega)
    }
}

/// A violated standing hypothesis on the potential.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation<T> {
    /// A coefficient is stored at `n = 0`.
    OriginEntry,
    /// `c(n)` is stored but `c(-n)` is not.
    MissingConjugate { n: LatticePoint },
    /// `c(-n) != conj(c(n))`.
    NotHermitian {
        n: LatticePoint,
        c_n: Complex<T>,
        c_minus_n: Complex<T>,
    },
    /// `|c(n)| > eps exp(-kappa0 |n|_1)`.
    DecayExceeded { n: LatticePoint, abs_c: T, bound: T },
}

impl<T: Real> fmt::Display for Violation<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::OriginEntry => write!(f, "coefficient at origin forbidden"),
            Violation::MissingConjugate { n } => {
                write!(f, "c({n}) present but c({}) missing", -n)
            }
            Violation::NotHermitian { n, c_n, c_minus_n } => write!(
                f,
                "c({}) = {:e}{:+e}i != conj(c({n})) = {:e}{:+e}i",
                -n,
                c_minus_n.re,
                c_minus_n.im,
                c_n.re,
                -c_n.im
            ),
            Violation::DecayExceeded { n, abs_c, bound } => write!(
                f,
                "|c({n})| = {abs_c:e} > eps*exp(-kappa0*|n|) = {bound:e}"
            ),
        }
    }
}

/// Fourier coefficients `c(n)` with the decay parameters `eps`, `kappa0`.
///
/// The coefficient map may violate the standing hypotheses; use
/// [`FourierPotential::validate`] to list the violations.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierPotential<T> {
    freq: FrequencyVector<T>,
    coeffs: BTreeMap<LatticePoint, Complex<T>>,
    eps: T,
    kappa0: T,
}

impl<T: Real> FourierPotential<T> {
    pub fn new(
        freq: FrequencyVector<T>,
        coeffs: BTreeMap<LatticePoint, Complex<T>>,
        eps: T,
        kappa0: T,
    ) -> Result<Self> {
        if !(eps >= T::zero()) || !eps.is_finite() {
            return Err(Error::InvalidInput(format!("eps = {eps} must be >= 0")));
        }
        if !(kappa0 > T::zero() && kappa0 <= T::one()) {
            return Err(Error::InvalidInput(format!(
                "kappa0 = {kappa0} must lie in (0, 1]"
            )));
        }
        let nu = freq.nu();
        for (n, c) in &coeffs {
            if n.dim() != nu {
                return Err(Error::DimensionMismatch(n.clone(), n.dim(), nu));
            }
            if !c.re.is_finite() || !c.im.is_finite() {
                return Err(Error::InvalidInput(format!("c({n}) is not finite")));
            }
        }
        Ok(FourierPotential {
            freq,
            coeffs,
            eps,
            kappa0,
        })
    }

    /// The zero potential (`eps = 0`).
    pub fn zero(freq: FrequencyVector<T>, kappa0: T) -> Result<Self> {
        Self::new(freq, BTreeMap::new(), T::zero(), kappa0)
    }

    /// Stores `c(n) = value` and `c(-n) = conj(value)`.
    pub fn with_pair(mut self, n: LatticePoint, value: Complex<T>) -> Result<Self> {
        if n.dim() != self.nu() {
            return Err(Error::DimensionMismatch(n.clone(), n.dim(), self.nu()));
        }
        if n.is_zero() {
            return Err(Error::ZeroLabel);
        }
        self.coeffs.insert(-&n, value.conj());
        self.coeffs.insert(n, value);
        Ok(self)
    }

    pub fn freq(&self) -> &FrequencyVector<T> {
        &self.freq
    }

    pub fn nu(&self) -> usize {
        self.freq.nu()
    }

    pub fn eps(&self) -> T {
        self.eps
    }

    pub fn kappa0(&self) -> T {
        self.kappa0
    }

    pub fn coeffs(&self) -> &BTreeMap<LatticePoint, Complex<T>> {
        &self.coeffs
    }

    pub fn coeff(&self, n: &LatticePoint) -> Complex<T> {
        self.coeffs.get(n).copied().unwrap_or_else(Complex::default)
    }

    /// `sum_n |c(n)|`, an upper bound on `sup |V|`.
    pub fn abs_sum(&self) -> T {
        self.coeffs.values().map(|c| c.norm()).sum()
    }

    /// Largest `|n|_1` carrying a nonzero coefficient.
    pub fn support_radius(&self) -> u64 {
        self.coeffs
            .iter()
            .filter(|(_, c)| !c.is_zero_complex())
            .map(|(n, _)| n.norm1())
            .max()
            .unwrap_or(0)
    }

    /// `eps exp(-kappa0 |n|_1)`.
    pub fn decay_bound(&self, n: &LatticePoint) -> T {
        self.eps * (-self.kappa0 * from_i64::<T>(n.norm1() as i64)).exp()
    }

    /// Lists every violated hypothesis; empty iff the potential is admissible.
    ///
    /// Comparisons carry a relative rounding allowance of a few ulps so that
    /// coefficients constructed at the decay bound are accepted.
    pub fn validate(&self) -> Vec<Violation<T>> {
        let ulps = lit::<T>(4.0) * T::epsilon();
        let mut out = Vec::new();
        for (n, c) in &self.coeffs {
            if n.is_zero() {
                out.push(Violation::OriginEntry);
                continue;
            }
            let minus = -n;
            match self.coeffs.get(&minus) {
                None => out.push(Violation::MissingConjugate { n: n.clone() }),
                Some(cm) => {
                    // report each asymmetric pair once, at its canonical member
                    if n.is_canonical() && (*cm - c.conj()).norm() > ulps * c.norm().max(cm.norm())
                    {
                        out.push(Violation::NotHermitian {
                            n: n.clone(),
                            c_n: *c,
                            c_minus_n: *cm,
                        });
                    }
                }
            }
            let bound = self.decay_bound(n);
            let abs_c = c.norm();
            if abs_c > bound * (T::one() + ulps) {
                out.push(Violation::DecayExceeded {
                    n: n.clone(),
                    abs_c,
                    bound,
                });
            }
        }
        out
    }

    /// `sum_n c(n) exp(i (n.omega) x)` without discarding the imaginary part.
    pub fn eval_complex(&self, x: T) -> Complex<T> {
        self.coeffs
            .iter()
            .map(|(n, c)| *c * Complex::from_polar(T::one(), self.freq.dot(n) * x))
            .fold(Complex::default(), |acc, z| acc + z)
    }

    /// `V(x)`; the imaginary part vanishes for Hermitian-symmetric
    /// coefficients and is discarded.
    pub fn eval(&self, x: T) -> T {
        self.eval_complex(x).re
    }
}

trait IsZeroComplex {
    fn is_zero_complex(&self) -> bool;
}

impl<T: Real> IsZeroComplex for Complex<T> {
    fn is_zero_complex(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }
}

/// Result of a box-restricted Diophantine scan.
#[derive(Clone, Debug, PartialEq)]
pub struct DiophantineScan<T> {
    /// `min |n.omega| |n|_1^b0` over the canonical half of the box.
    pub worst_ratio: T,
    pub worst_n: LatticePoint,
    /// Box radius scanned.
    pub radius: u64,
    /// Whether `worst_ratio >= a0` on the box (never a claim about all of `Z^nu`).
    pub holds_on_box: bool,
}

/// Scans `0 < |n|_1 <= radius` for the worst Diophantine ratio.
///
/// `n` and `-n` give the same `|n.omega|`; only canonical representatives
/// (first nonzero component positive) are reported. Ties keep the
/// lexicographically smallest point.
pub fn diophantine_scan<T: Real>(f: &FrequencyVector<T>, radius: u64) -> Result<DiophantineScan<T>> {
    if radius == 0 {
        return Err(Error::InvalidInput("scan radius must be >= 1".into()));
    }
    let mut best: Option<(T, LatticePoint)> = None;
    for r in 1..=radius {
        let weight = from_i64::<T>(r as i64).powf(f.b0());
        for n in shell(f.nu(), r).into_iter().filter(LatticePoint::is_canonical) {
            let d = f.dot(&n).abs();
            if d.is_zero() {
                return Err(Error::RationallyDependent(n));
            }
            let ratio = d * weight;
            let better = match &best {
                None => true,
                Some((b, bn)) => ratio < *b || (ratio == *b && n < *bn),
            };
            if better {
                best = Some((ratio, n));
            }
        }
    }
    let (worst_ratio, worst_n) = best.expect("radius >= 1 yields a nonempty box");
    Ok(DiophantineScan {
        worst_ratio,
        worst_n,
        radius,
        holds_on_box: worst_ratio >= f.a0(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn periodic(g: f64, eps: f64) -> FourierPotential<f64> {
        let f = FrequencyVector::new(vec![1.0], 0.5, 2.0).unwrap();
        FourierPotential::new(f, BTreeMap::new(), eps, 1.0)
            .unwrap()
            .with_pair(LatticePoint::from([1]), Complex::new(g, 0.0))
            .unwrap()
    }

    #[test]
    fn frequency_vector_rejects_standing_assumption_violations() {
        assert!(FrequencyVector::new(vec![1.0, 2f64.sqrt()], 0.5, 2.0).is_err());
        assert!(FrequencyVector::new(vec![1.0], 1.0, 2.0).is_err());
        assert!(FrequencyVector::new(vec![0.0, 0.0], 0.5, 3.0).is_err());
        assert!(FrequencyVector::<f64>::new(vec![], 0.5, 3.0).is_err());
    }

    #[test]
    fn zero_potential_is_valid() {
        let f = FrequencyVector::new(vec![1.0], 0.5, 2.0).unwrap();
        let p = FourierPotential::zero(f, 1.0).unwrap();
        assert!(p.validate().is_empty());
        assert_eq!(p.eval(0.7), 0.0);
    }

    #[test]
    fn decay_violation_is_reported_with_both_sides() {
        let p = periodic(0.001, 0.001);
        let v = p.validate();
        assert_eq!(v.len(), 2);
        match &v[0] {
            Violation::DecayExceeded { n, abs_c, bound } => {
                assert_eq!(n, &LatticePoint::from([-1]));
                assert_eq!(*abs_c, 0.001);
                assert!((bound - 0.001 * (-1f64).exp()).abs() < 1e-18);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(v[0].to_string().contains("eps*exp(-kappa0*|n|)"));
    }

    #[test]
    fn coefficient_below_bound_passes() {
        assert!(periodic(0.0003, 0.001).validate().is_empty());
    }

    #[test]
    fn origin_and_missing_conjugate_are_reported() {
        let f = FrequencyVector::new(vec![1.0], 0.5, 2.0).unwrap();
        let mut coeffs = BTreeMap::new();
        coeffs.insert(LatticePoint::from([0]), Complex::new(1e-4, 0.0));
        coeffs.insert(LatticePoint::from([2]), Complex::new(1e-5, 0.0));
        let p = FourierPotential::new(f, coeffs, 1e-3, 1.0).unwrap();
        let v = p.validate();
        assert!(v.contains(&Violation::OriginEntry));
        assert!(v.contains(&Violation::MissingConjugate {
            n: LatticePoint::from([2])
        }));
    }

    #[test]
    fn non_hermitian_pair_is_reported_once() {
        let f = FrequencyVector::new(vec![1.0], 0.5, 2.0).unwrap();
        let mut coeffs = BTreeMap::new();
        coeffs.insert(LatticePoint::from([1]), Complex::new(1e-4, 1e-4));
        coeffs.insert(LatticePoint::from([-1]), Complex::new(1e-4, 1e-4));
        let p = FourierPotential::new(f, coeffs, 1e-3, 1.0).unwrap();
        let v = p.validate();
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::NotHermitian { .. }));
    }

    #[test]
    fn cosine_potential_values() {
        let p = periodic(1e-3, 1e-2);
        assert!((p.eval(0.0) - 2e-3).abs() < 1e-18);
        assert!((p.eval(std::f64::consts::PI) + 2e-3).abs() < 1e-18);
    }

    #[test]
    fn scan_of_unit_frequency() {
        let f = FrequencyVector::new(vec![1.0], 0.5, 2.0).unwrap();
        for radius in [1, 5, 40] {
            let s = diophantine_scan(&f, radius).unwrap();
            assert_eq!(s.worst_ratio, 1.0);
            assert_eq!(s.worst_n, LatticePoint::from([1]));
            assert!(s.holds_on_box);
        }
    }

    #[test]
    fn scan_reports_rational_dependency() {
        let f = FrequencyVector::new(vec![1.0, 2.0], 0.5, 3.0).unwrap();
        assert_eq!(
            diophantine_scan(&f, 3),
            Err(Error::RationallyDependent(LatticePoint::from([2, -1])))
        );
    }

    #[test]
    fn scan_agrees_with_brute_force_for_golden_pair() {
        let f = FrequencyVector::new(vec![1.0, 2f64.sqrt()], 0.5, 2.5).unwrap();
        for radius in [5u64, 12] {
            let s = diophantine_scan(&f, radius).unwrap();
            let mut brute = f64::INFINITY;
            let r = radius as i64;
            for a in -r..=r {
                for b in -r..=r {
                    let norm = (a.abs() + b.abs()) as f64;
                    if norm == 0.0 || norm > radius as f64 {
                        continue;
                    }
                    brute = brute.min((a as f64 + b as f64 * 2f64.sqrt()).abs() * norm.powf(2.5));
                }
            }
            assert_eq!(s.worst_ratio, brute);
        }
        // Pell convergents of sqrt(2)
        assert!((f.dot(&LatticePoint::from([3, -2])).abs() - 0.171_572_875_253_809_9).abs() < 1e-15);
        assert!((f.dot(&LatticePoint::from([-7, 5])).abs() - 0.071_067_811_865_475_2).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn eval_is_real_for_hermitian_maps(
            entries in proptest::collection::vec((1i64..4, -3i64..4, -1.0f64..1.0, -1.0f64..1.0), 0..6),
            x in -100.0f64..100.0,
        ) {
            let f = FrequencyVector::new(vec![1.0, 2f64.sqrt()], 0.5, 2.5).unwrap();
            let mut p = FourierPotential::new(f, BTreeMap::new(), 1.0, 1.0).unwrap();
            for (a, b, re, im) in entries {
                let n = LatticePoint::from([a, b]);
                let scale = 1e-3 * (-((a.abs() + b.abs()) as f64)).exp();
                p = p.with_pair(n, Complex::new(re * scale, im * scale)).unwrap();
            }
            let z = p.eval_complex(x);
            prop_assert!(z.im.abs() <= 1e-12 * p.abs_sum().max(f64::MIN_POSITIVE));
        }

        #[test]
        fn periodic_case_has_period_two_pi(x in -50.0f64..50.0, g in -1e-3f64..1e-3) {
            let p = periodic(g, 1e-2);
            let tau = 2.0 * std::f64::consts::PI;
            prop_assert!((p.eval(x + tau) - p.eval(x)).abs() < 1e-12);
        }

        #[test]
        fn scan_is_nonincreasing_in_radius(w in 0.1f64..3.0, r in 1u64..9) {
            let f = FrequencyVector::new(vec![1.0, w], 0.5, 2.5).unwrap();
            if let (Ok(a), Ok(b)) = (diophantine_scan(&f, r), diophantine_scan(&f, r + 1)) {
                prop_assert!(b.worst_ratio <= a.worst_ratio);
            }
        }

        #[test]
        fn validation_is_order_independent(entries in proptest::collection::vec((1i64..6, -1e-3f64..1e-3), 0..5)) {
            let f = FrequencyVector::new(vec![1.0], 0.5, 2.0).unwrap();
            let mut forward = FourierPotential::new(f.clone(), BTreeMap::new(), 1e-3, 1.0).unwrap();
            let mut backward = FourierPotential::new(f, BTreeMap::new(), 1e-3, 1.0).unwrap();
            for (n, c) in &entries {
                forward = forward.with_pair(LatticePoint::from([*n]), Complex::new(*c, 0.0)).unwrap();
            }
            for (n, c) in entries.iter().rev() {
                backward = backward.with_pair(LatticePoint::from([*n]), Complex::new(*c, 0.0)).unwrap();
            }
            // later insertions win in both maps; compare only when keys are distinct
            let mut keys: Vec<_> = entries.iter().map(|e| e.0).collect();
            keys.sort();
            keys.dedup();
            if keys.len() == entries.len() {
                prop_assert_eq!(forward.validate(), backward.validate());
                prop_assert_eq!(forward.validate(), forward.validate());
            }
        }
    }
}
