//! Labeled gap catalog and the quantitative gap verifiers.

use rayon::prelude::*;

use crate::dispersion::{dispersion_at, gap_edges};
use crate::error::{Error, Result};
use crate::lattice::{nonzero_ball, shell_count, LatticePoint};
use crate::potential::FourierPotential;
use crate::scalar::{from_usize, lit, Real};

/// Gap `(e_minus, e_plus)` opened at `k_m`; zero width when closed.
#[derive(Clone, Debug, PartialEq)]
pub struct Gap<T> {
    pub label: LatticePoint,
    pub e_minus: T,
    pub e_plus: T,
    pub err: T,
}

impl<T: Real> Gap<T> {
    pub fn width(&self) -> T {
        self.e_plus - self.e_minus
    }

    pub fn is_closed(&self) -> bool {
        self.e_plus == self.e_minus
    }

    /// `2 eps exp(-kappa0 |m|_1 / 2)`.
    pub fn width_bound(&self, eps: T, kappa0: T) -> T {
        lit::<T>(2.0) * eps * (-kappa0 * lit::<T>(self.label.norm1() as f64) / lit(2.0)).exp()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GapCatalog<T> {
    /// Spectrum bottom `E(0)`.
    pub bottom: T,
    pub bottom_err: T,
    /// Canonical labels `0 < |m|_1 <= max_label` in `(|m|_1, lex)` order,
    /// unresolved labels excluded.
    pub gaps: Vec<Gap<T>>,
    pub max_label: u64,
    /// Upper bound on the total length of unlisted gaps.
    pub tail_bound: T,
    pub eps: T,
    pub kappa0: T,
    pub omega: Vec<T>,
    /// Labels whose edges could not be computed.
    pub unresolved: Vec<LatticePoint>,
    /// Labels whose resonance analysis met equal-norm indices.
    pub tie: Vec<LatticePoint>,
}

impl<T: Real> GapCatalog<T> {
    pub fn nu(&self) -> usize {
        self.omega.len()
    }

    pub fn gap(&self, label: &LatticePoint) -> Option<&Gap<T>> {
        let c = label.canonical();
        self.gaps.iter().find(|g| g.label == c)
    }

    pub fn open_gaps(&self) -> impl Iterator<Item = &Gap<T>> {
        self.gaps.iter().filter(|g| !g.is_closed())
    }

    pub fn total_width(&self) -> T {
        self.gaps.iter().map(|g| g.width()).sum()
    }

    /// Pairs of open gaps whose overlap exceeds their combined error.
    pub fn overlaps(&self) -> Vec<(LatticePoint, LatticePoint)> {
        let mut open: Vec<&Gap<T>> = self.open_gaps().collect();
        open.sort_by(|a, b| a.e_minus.partial_cmp(&b.e_minus).expect("finite"));
        let mut out = Vec::new();
        for (i, a) in open.iter().enumerate() {
            for b in &open[i + 1..] {
                if b.e_minus >= a.e_plus {
                    break;
                }
                let overlap = a.e_plus.min(b.e_plus) - b.e_minus;
                if overlap > a.err + b.err {
                    out.push((a.label.clone(), b.label.clone()));
                }
            }
        }
        out
    }

    /// Resolved, tie-free and overlap-free.
    pub fn is_clean(&self) -> bool {
        self.unresolved.is_empty() && self.tie.is_empty() && self.overlaps().is_empty()
    }
}

/// A catalog together with the reason each unresolved label failed.
#[derive(Clone, Debug)]
pub struct CatalogBuild<T> {
    pub catalog: GapCatalog<T>,
    pub failures: Vec<(LatticePoint, Error)>,
}

/// Canonical labels `0 < |m|_1 <= max_label`, ordered by `(|m|_1, lex)`.
pub fn canonical_labels(nu: usize, max_label: u64) -> Vec<LatticePoint> {
    nonzero_ball(nu, max_label)
        .into_iter()
        .filter(LatticePoint::is_canonical)
        .collect()
}

pub fn build_catalog<T: Real>(p: &FourierPotential<T>, max_label: u64, radius: u64) -> Result<GapCatalog<T>> {
    build_catalog_detailed(p, max_label, radius).map(|b| b.catalog)
}

pub fn build_catalog_detailed<T: Real>(
    p: &FourierPotential<T>,
    max_label: u64,
    radius: u64,
) -> Result<CatalogBuild<T>> {
    if max_label == 0 {
        return Err(Error::InvalidInput("M must be at least 1".into()));
    }
    if radius < max_label + 2 {
        return Err(Error::InvalidInput(format!(
            "box radius N = {radius} must be at least M + 2 = {}",
            max_label + 2
        )));
    }
    let ground = dispersion_at(p, T::zero(), radius)?;
    let labels = canonical_labels(p.nu(), max_label);
    let results: Vec<_> = labels.par_iter().map(|m| gap_edges(p, m, radius)).collect();

    let mut gaps = Vec::new();
    let mut unresolved = Vec::new();
    let mut failures = Vec::new();
    let mut tie = Vec::new();
    for (m, r) in labels.into_iter().zip(results) {
        match r {
            Ok(edges) => {
                if edges.tie {
                    tie.push(m.clone());
                }
                gaps.push(Gap {
                    label: m,
                    e_minus: edges.e_minus,
                    e_plus: edges.e_plus,
                    err: edges.err,
                });
            }
            Err(e) => {
                unresolved.push(m.clone());
                failures.push((m, e));
            }
        }
    }
    let catalog = GapCatalog {
        bottom: ground.energy,
        bottom_err: ground.trunc_error,
        gaps,
        max_label,
        tail_bound: tail_bound(p.eps(), p.kappa0(), p.nu(), max_label),
        eps: p.eps(),
        kappa0: p.kappa0(),
        omega: p.freq().omega().to_vec(),
        unresolved,
        tie,
    };
    Ok(CatalogBuild { catalog, failures })
}

/// Proven upper bound on `2 eps sum_{|m|_1 > M} exp(-kappa0 |m|_1 / 2)`.
pub fn tail_bound<T: Real>(eps: T, kappa0: T, nu: usize, max_label: u64) -> T {
    if eps.is_zero() {
        return T::zero();
    }
    lit::<T>(2.0) * eps * shell_series(kappa0 / lit(2.0), nu, max_label + 1)
}

/// Upper bound on `sum_{r >= start} #{|m|_1 = r} exp(-rate r)`.
///
/// Exact shell terms until they drop below `1e-30` of the running sum, then
/// a geometric bound using `#shell(r+1)/#shell(r) <= r / (r - nu + 1)`.
pub(crate) fn shell_series<T: Real>(rate: T, nu: usize, start: u64) -> T {
    let q = (-rate).exp();
    let mut sum = T::zero();
    let mut r = start.max(1);
    loop {
        let term = shell_term(q, nu, r);
        sum += term;
        let rr = from_usize::<T>(r as usize);
        let ratio = if (r as usize) >= nu {
            q * rr / (rr - from_usize::<T>(nu) + T::one())
        } else {
            T::infinity()
        };
        if ratio < T::one() && term <= lit::<T>(1e-30) * sum {
            let tail = term * ratio / (T::one() - ratio);
            // inflate against accumulated rounding
            return (sum + tail) * (T::one() + lit::<T>(1e-12));
        }
        r += 1;
    }
}

fn shell_term<T: Real>(q: T, nu: usize, r: u64) -> T {
    let count = T::from_u128(shell_count(nu, r)).unwrap_or_else(T::infinity);
    count * q.powf(lit::<T>(r as f64))
}

/// `C(kappa0, nu)` with `sum_m width(m) <= C eps`: the tail bound from `M = 0`
/// per unit `eps`.
pub fn total_width_constant<T: Real>(kappa0: T, nu: usize) -> T {
    tail_bound(T::one(), kappa0, nu, 0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayReport<T> {
    /// `min (bound + 2 err - width)` over open gaps; infinite without any.
    pub worst_margin: T,
    pub worst_label: Option<LatticePoint>,
    pub violations: Vec<LatticePoint>,
}

impl<T: Real> DecayReport<T> {
    pub fn passes(&self) -> bool {
        self.violations.is_empty()
    }
}

/// `width <= 2 eps exp(-kappa0 |m|_1 / 2) + 2 err` for every gap.
pub fn verify_gap_decay<T: Real>(cat: &GapCatalog<T>) -> DecayReport<T> {
    let mut report = DecayReport {
        worst_margin: T::infinity(),
        worst_label: None,
        violations: Vec::new(),
    };
    for g in cat.open_gaps() {
        let margin = g.width_bound(cat.eps, cat.kappa0) + lit::<T>(2.0) * g.err - g.width();
        if margin < T::zero() {
            report.violations.push(g.label.clone());
        }
        if margin < report.worst_margin {
            report.worst_margin = margin;
            report.worst_label = Some(g.label.clone());
        }
    }
    report
}

/// Distance between closed intervals.
fn interval_distance<T: Real>(a: &Gap<T>, b: &Gap<T>) -> T {
    (a.e_minus.max(b.e_minus) - a.e_plus.min(b.e_plus)).max(T::zero())
}

fn norm_pow<T: Real>(m: &LatticePoint, b: T) -> T {
    lit::<T>(m.norm1() as f64).powf(b)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeparationReport<T> {
    pub a: T,
    pub b: T,
    /// `min (dist - a |m'|^-b + err_m + err_m')`.
    pub worst_margin: T,
    pub worst_pair: Option<(LatticePoint, LatticePoint)>,
    pub violations: Vec<(LatticePoint, LatticePoint)>,
    /// Largest `a` passing without error allowance: `min dist |m'|^b`.
    pub fitted_a: T,
}

impl<T: Real> SeparationReport<T> {
    pub fn passes(&self) -> bool {
        self.violations.is_empty()
    }
}

fn check_positive<T: Real>(a: T, b: T) -> Result<()> {
    if a > T::zero() && b > T::zero() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("constants must be positive, got a = {a}, b = {b}")))
    }
}

/// `dist(G_m, G_m') >= a |m'|^-b - 2 err` over pairs with `|m'|_1 >= |m|_1`.
pub fn verify_gap_separation<T: Real>(cat: &GapCatalog<T>, a: T, b: T) -> Result<SeparationReport<T>> {
    check_positive(a, b)?;
    let mut report = SeparationReport {
        a,
        b,
        worst_margin: T::infinity(),
        worst_pair: None,
        violations: Vec::new(),
        fitted_a: T::infinity(),
    };
    for (i, g) in cat.gaps.iter().enumerate() {
        for h in &cat.gaps[i + 1..] {
            let (m, mp) = if g.label.norm1() <= h.label.norm1() { (g, h) } else { (h, g) };
            let scale = norm_pow(&mp.label, b);
            let dist = interval_distance(g, h);
            let margin = dist - a / scale + g.err + h.err;
            let pair = (m.label.clone(), mp.label.clone());
            if margin < T::zero() {
                report.violations.push(pair.clone());
            }
            if margin < report.worst_margin {
                report.worst_margin = margin;
                report.worst_pair = Some(pair);
            }
            report.fitted_a = report.fitted_a.min(dist * scale);
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BottomReport<T> {
    pub a: T,
    pub b: T,
    pub worst_margin: T,
    pub worst_label: Option<LatticePoint>,
    pub violations: Vec<LatticePoint>,
    /// `min (E^-_m - bottom) |m|^b`.
    pub fitted_a: T,
}

impl<T: Real> BottomReport<T> {
    pub fn passes(&self) -> bool {
        self.violations.is_empty()
    }
}

/// `E^-_m - bottom >= a |m|^-b - 2 err` for every gap.
pub fn verify_bottom_separation<T: Real>(cat: &GapCatalog<T>, a: T, b: T) -> Result<BottomReport<T>> {
    check_positive(a, b)?;
    let mut report = BottomReport {
        a,
        b,
        worst_margin: T::infinity(),
        worst_label: None,
        violations: Vec::new(),
        fitted_a: T::infinity(),
    };
    for g in &cat.gaps {
        let scale = norm_pow(&g.label, b);
        let lift = g.e_minus - cat.bottom;
        let margin = lift - a / scale + g.err + cat.bottom_err;
        if margin < T::zero() {
            report.violations.push(g.label.clone());
        }
        if margin < report.worst_margin {
            report.worst_margin = margin;
            report.worst_label = Some(g.label.clone());
        }
        report.fitted_a = report.fitted_a.min(lift * scale);
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct InverseReport<T> {
    pub kappa: T,
    /// Least `eps'` with `width(m) <= eps' exp(-kappa |m|_1)` on the catalog.
    pub eps_fit: T,
    /// `min (sqrt(eps') exp(-kappa |m|/2) - |c(m)|)` over stored coefficients.
    pub worst_margin: T,
    pub worst_label: Option<LatticePoint>,
    pub violations: Vec<LatticePoint>,
}

impl<T: Real> InverseReport<T> {
    pub fn passes(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Fits the gap-decay hypothesis at rate `kappa` and tests the resulting
/// coefficient bound.
pub fn inverse_coefficient_check<T: Real>(
    p: &FourierPotential<T>,
    cat: &GapCatalog<T>,
    kappa: T,
) -> Result<InverseReport<T>> {
    if !(kappa > lit::<T>(4.0) * p.kappa0()) {
        return Err(Error::InvalidInput(format!(
            "kappa = {kappa} must exceed 4 kappa0 = {}",
            lit::<T>(4.0) * p.kappa0()
        )));
    }
    let norm = |m: &LatticePoint| lit::<T>(m.norm1() as f64);
    let eps_fit = cat
        .gaps
        .iter()
        .map(|g| g.width() * (kappa * norm(&g.label)).exp())
        .fold(T::zero(), |a, b| a.max(b));
    let root = eps_fit.sqrt();
    let mut report = InverseReport {
        kappa,
        eps_fit,
        worst_margin: T::infinity(),
        worst_label: None,
        violations: Vec::new(),
    };
    for (m, c) in p.coeffs() {
        let margin = root * (-kappa * norm(m) / lit(2.0)).exp() - c.norm();
        if margin < T::zero() {
            report.violations.push(m.clone());
        }
        if margin < report.worst_margin {
            report.worst_margin = margin;
            report.worst_label = Some(m.clone());
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::FrequencyVector;
    use num_complex::Complex;
    use std::collections::BTreeMap;

    fn periodic(g: f64) -> FourierPotential<f64> {
        let f = FrequencyVector::new(vec![1.0], 0.5, 2.0).unwrap();
        FourierPotential::new(f, BTreeMap::new(), g * std::f64::consts::E, 1.0)
            .unwrap()
            .with_pair(LatticePoint::from([1]), Complex::new(g, 0.0))
            .unwrap()
    }

    fn free(omega: Vec<f64>) -> FourierPotential<f64> {
        let f = FrequencyVector::new(omega, 0.5, 2.5).unwrap();
        FourierPotential::zero(f, 1.0).unwrap()
    }

    /// Effective coupling of the degenerate pair `{0, -m}` at `k = m/2` for
    /// `V = 2g cos x`: product of `g` along the shortest path divided by the
    /// energy denominators of the intermediate states.
    fn hill_width(g: f64, m: i64) -> f64 {
        let k = m as f64 / 2.0;
        let e0 = k * k;
        let mut coupling = g;
        for j in 1..m {
            let w = k - j as f64;
            coupling *= g / (e0 - w * w);
        }
        2.0 * coupling.abs()
    }

    #[test]
    fn tail_bound_geometric_oracle() {
        let closed = 4e-3 * (-5.5f64).exp() / (1.0 - (-0.5f64).exp());
        let t = tail_bound(1e-3, 1.0, 1, 10);
        assert!(t >= closed && t < closed * (1.0 + 1e-10), "{t} vs {closed}");
        assert!((t - 4.155e-5).abs() < 1e-8);
        assert_eq!(tail_bound(0.0, 1.0, 2, 3), 0.0);
    }

    #[test]
    fn tail_bound_dominates_brute_force_and_decreases() {
        for nu in 1..=3 {
            let mut prev = f64::INFINITY;
            for m in 1..12 {
                let t = tail_bound(1e-3, 0.7, nu, m);
                let brute: f64 = (m + 1..400)
                    .map(|r| 2e-3 * shell_count(nu, r) as f64 * (-0.35 * r as f64).exp())
                    .sum();
                assert!(t >= brute, "nu {nu} M {m}: {t} < {brute}");
                assert!(t <= brute * (1.0 + 1e-9));
                assert!(t <= prev);
                prev = t;
            }
        }
    }

    #[test]
    fn free_catalog() {
        let cat = build_catalog(&free(vec![1.0, 2f64.sqrt()]), 3, 5).unwrap();
        assert!(cat.bottom.abs() < 1e-15);
        assert_eq!(cat.tail_bound, 0.0);
        assert_eq!(cat.gaps.len(), 12);
        assert!(cat.gaps.iter().all(|g| g.is_closed()));
        assert!(cat.is_clean());
        let d = verify_gap_decay(&cat);
        assert!(d.passes() && d.worst_margin.is_infinite());
        let m = cat.gap(&LatticePoint::from([-1, 1])).unwrap();
        let expected = ((2f64.sqrt() - 1.0) / 2.0).powi(2);
        assert!((m.e_minus - expected).abs() < 1e-12);
        assert!((expected - 0.042893).abs() < 1e-6);
    }

    #[test]
    fn rejects_small_box() {
        assert!(build_catalog(&periodic(1e-3), 3, 4).is_err());
    }

    #[test]
    fn periodic_catalog_matches_hill_oracle() {
        let g = 1e-3;
        let cat = build_catalog(&periodic(g), 3, 8).unwrap();
        assert!(cat.is_clean());
        assert_eq!(cat.gaps.len(), 3);
        let w: Vec<f64> = cat.gaps.iter().map(|x| x.width()).collect();
        assert!((hill_width(g, 1) - 2e-3).abs() < 1e-15);
        assert!((hill_width(g, 2) - 2e-6).abs() < 1e-18);
        assert!((hill_width(g, 3) - 5e-10).abs() < 1e-22);
        assert!((w[0] - hill_width(g, 1)).abs() < 10.0 * g * g);
        assert!((w[1] - hill_width(g, 2)).abs() < 1e-3 * hill_width(g, 2), "{}", w[1]);
        assert!((w[2] - hill_width(g, 3)).abs() < 2e-2 * hill_width(g, 3), "{}", w[2]);
        assert!(verify_gap_decay(&cat).passes());
    }

    #[test]
    fn dishonest_eps_fails_decay() {
        let f = FrequencyVector::new(vec![1.0], 0.5, 2.0).unwrap();
        let mut cat = build_catalog(&periodic(1e-3), 1, 4).unwrap();
        cat.eps = 1e-3;
        let r = verify_gap_decay(&cat);
        assert_eq!(r.violations, vec![LatticePoint::from([1])]);
        let _ = f;
    }

    #[test]
    fn injected_decay_fault_is_named() {
        let mut cat = build_catalog(&free(vec![1.0, 2f64.sqrt()]), 2, 4).unwrap();
        cat.eps = 1e-3;
        let g = cat.gaps.iter_mut().find(|g| g.label == LatticePoint::from([2, 0])).unwrap();
        g.e_plus = g.e_minus + 1e-3;
        let r = verify_gap_decay(&cat);
        assert_eq!(r.violations, vec![LatticePoint::from([2, 0])]);
        assert_eq!(r.worst_label, Some(LatticePoint::from([2, 0])));
    }

    #[test]
    fn separation_on_free_periodic_catalog() {
        let cat = build_catalog(&free(vec![1.0]), 2, 4).unwrap();
        let r = verify_gap_separation(&cat, 0.1, 8.0).unwrap();
        assert!(r.passes());
        assert!((r.fitted_a - 0.75 * 2f64.powi(8)).abs() < 1e-9);
        let bottom = verify_bottom_separation(&cat, 0.1, 1.0).unwrap();
        assert!(bottom.passes());
        assert!((bottom.fitted_a - 0.25).abs() < 1e-12);
        assert!(verify_gap_separation(&cat, 0.0, 1.0).is_err());
    }

    #[test]
    fn periodic_separation_fit_is_positive() {
        let cat = build_catalog(&periodic(1e-3), 3, 8).unwrap();
        let r = verify_gap_separation(&cat, 1e-3, 8.0).unwrap();
        assert!(r.fitted_a > 0.0);
        assert!(r.passes());
    }

    #[test]
    fn injected_bottom_fault_is_named() {
        let mut cat = build_catalog(&free(vec![1.0]), 2, 4).unwrap();
        cat.gaps[0].e_minus = cat.bottom;
        cat.gaps[0].e_plus = cat.bottom;
        let r = verify_bottom_separation(&cat, 0.1, 1.0).unwrap();
        assert_eq!(r.violations, vec![LatticePoint::from([1])]);
    }

    #[test]
    fn overlap_detection() {
        let mut cat = build_catalog(&free(vec![1.0]), 2, 4).unwrap();
        cat.gaps[0].e_plus = 1.1;
        cat.gaps[1].e_minus = 0.9;
        assert_eq!(
            cat.overlaps(),
            vec![(LatticePoint::from([1]), LatticePoint::from([2]))]
        );
        assert!(!cat.is_clean());
    }

    #[test]
    fn inverse_check() {
        let g = 1e-3;
        let p = periodic(g);
        let cat = build_catalog(&p, 3, 8).unwrap();
        assert!(inverse_coefficient_check(&p, &cat, 4.0).is_err());
        let r = inverse_coefficient_check(&p, &cat, 5.0).unwrap();
        assert!(r.passes());
        let at_one = r.eps_fit.sqrt() * (-2.5f64).exp();
        assert!(at_one >= (2.0 * g).sqrt() * 0.99);

        let zero = free(vec![1.0]);
        let cat0 = build_catalog(&zero, 2, 4).unwrap();
        let r0 = inverse_coefficient_check(&zero, &cat0, 5.0).unwrap();
        assert_eq!(r0.eps_fit, 0.0);
        assert!(r0.passes());
    }

    #[test]
    fn inverse_check_flags_injected_coefficient() {
        let mut cat = build_catalog(&free(vec![1.0]), 2, 4).unwrap();
        for g in &mut cat.gaps {
            let w = 1e-3 * (-5.0 * g.label.norm1() as f64).exp();
            g.e_plus = g.e_minus + w;
        }
        let f = FrequencyVector::new(vec![1.0], 0.5, 2.0).unwrap();
        let p = FourierPotential::new(f, BTreeMap::new(), 1.0, 1.0)
            .unwrap()
            .with_pair(LatticePoint::from([2]), Complex::new(1e-2, 0.0))
            .unwrap();
        let r = inverse_coefficient_check(&p, &cat, 5.0).unwrap();
        assert!(!r.passes());
        assert!(r.violations.contains(&LatticePoint::from([2])));
    }

    #[test]
    fn total_width_constant_bounds_catalog() {
        let p = periodic(1e-3);
        let cat = build_catalog(&p, 3, 8).unwrap();
        let c = total_width_constant(p.kappa0(), p.nu());
        assert!(cat.total_width() + cat.tail_bound <= c * p.eps());
    }

    #[test]
    fn catalog_is_independent_of_thread_count() {
        let p = periodic(1e-3);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| build_catalog(&p, 3, 8).unwrap())
        };
        assert_eq!(run(1), run(3));
    }
}
