//! Real-space finite-difference cross-check through the integrated density
//! of states.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaps::GapCatalog;
use crate::lattice::LatticePoint;
use crate::potential::FourierPotential;
use crate::scalar::{lit, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    Dirichlet,
    Neumann,
}

/// Three-point discretization of `-psi'' + V psi` on `[0, L]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteDifferenceModel<T> {
    pub length: T,
    pub step: T,
    pub boundary: Boundary,
    /// Potential at the grid nodes.
    pub values: Vec<T>,
}

impl<T: Real> FiniteDifferenceModel<T> {
    /// Dirichlet uses nodes `j h`, `0 < j < L/h`; Neumann uses cell centers
    /// `(j + 1/2) h`, `0 <= j < L/h`.
    pub fn new(p: &FourierPotential<T>, length: T, step: T, boundary: Boundary) -> Result<Self> {
        let cells = cell_count(length, step)?;
        let values: Vec<T> = match boundary {
            Boundary::Dirichlet => (1..cells).map(|j| p.eval(step * lit::<T>(j as f64))).collect(),
            Boundary::Neumann => (0..cells)
                .map(|j| p.eval(step * (lit::<T>(j as f64) + lit(0.5))))
                .collect(),
        };
        let vmax = values.iter().fold(T::zero(), |a, v| a.max(v.abs()));
        let load = step * step * vmax;
        if load > lit(0.1) {
            return Err(Error::IllConditioned(load.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(FiniteDifferenceModel {
            length,
            step,
            boundary,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Eigenvalues strictly below `e`, by the inertia of `A - e I = L D L^T`.
    pub fn count_below(&self, e: T) -> usize {
        let inv = T::one() / (self.step * self.step);
        let off2 = inv * inv;
        let n = self.values.len();
        let tiny = T::min_positive_value().sqrt();
        let mut count = 0;
        let mut d = T::one();
        for (i, v) in self.values.iter().enumerate() {
            let end = i == 0 || i + 1 == n;
            let diag = if self.boundary == Boundary::Neumann && end {
                inv + *v
            } else {
                lit::<T>(2.0) * inv + *v
            };
            d = if i == 0 { diag - e } else { diag - e - off2 / d };
            if d.is_zero() {
                d = -tiny;
            }
            if d < T::zero() {
                count += 1;
            }
        }
        count
    }

    /// Eigenvalues inside `(lo, hi)` to absolute accuracy `tol`, by bisection
    /// on the counting function.
    pub fn eigenvalues_in(&self, lo: T, hi: T, tol: T) -> Vec<T> {
        let base = self.count_below(lo);
        let top = self.count_below(hi);
        (base..top)
            .map(|idx| {
                // smallest x with count_below(x) > idx
                let (mut a, mut b) = (lo, hi);
                while b - a > tol {
                    let mid = (a + b) / lit(2.0);
                    if self.count_below(mid) > idx {
                        b = mid;
                    } else {
                        a = mid;
                    }
                }
                (a + b) / lit(2.0)
            })
            .collect()
    }
}

fn cell_count<T: Real>(length: T, step: T) -> Result<usize> {
    if !(length > T::zero() && step > T::zero()) {
        return Err(Error::InvalidInput("L and h must be positive".into()));
    }
    let ratio = length / step;
    let n = ratio.round();
    if (ratio - n).abs() > lit::<T>(1e-9) * n || n < lit(10.0) {
        return Err(Error::InvalidInput(format!(
            "L/h = {ratio} must be an integer >= 10"
        )));
    }
    n.to_usize()
        .ok_or_else(|| Error::InvalidInput("L/h too large".into()))
}

/// IDS values `count / L` for both boundary conditions.
#[derive(Clone, Debug, PartialEq)]
pub struct IdsEstimate<T> {
    pub energies: Vec<T>,
    pub dirichlet: Vec<T>,
    pub neumann: Vec<T>,
}

pub fn ids_estimate<T: Real>(p: &FourierPotential<T>, length: T, step: T, energies: &[T]) -> Result<IdsEstimate<T>> {
    let dir = FiniteDifferenceModel::new(p, length, step, Boundary::Dirichlet)?;
    let neu = FiniteDifferenceModel::new(p, length, step, Boundary::Neumann)?;
    let per = |m: &FiniteDifferenceModel<T>| -> Vec<T> {
        energies
            .par_iter()
            .map(|&e| lit::<T>(m.count_below(e) as f64) / length)
            .collect()
    };
    Ok(IdsEstimate {
        energies: energies.to_vec(),
        dirichlet: per(&dir),
        neumann: per(&neu),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GapLabelEntry<T> {
    pub label: LatticePoint,
    pub width: T,
    /// Level spacing `2 pi |k_m| / L` at the gap.
    pub resolution: T,
    pub selected: bool,
    /// `|m.omega| / (2 pi)`.
    pub expected: T,
    /// IDS at the gap center, Dirichlet and Neumann.
    pub plateau: (T, T),
    /// Largest IDS change across the gap interior (either boundary).
    pub variation: T,
    /// FD gap edges per boundary condition: endpoints of the widest level
    /// spacing near the Galerkin gap.
    pub fd_edges: Vec<(T, T)>,
    /// `max(4 pi / L, 10 h^2 E)`.
    pub edge_tolerance: T,
    pub plateau_ok: bool,
    pub constant_ok: bool,
    pub edges_ok: bool,
}

impl<T: Real> GapLabelEntry<T> {
    pub fn passes(&self) -> bool {
        !self.selected || (self.plateau_ok && self.constant_ok && self.edges_ok)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GapLabelReport<T> {
    pub length: T,
    pub step: T,
    pub entries: Vec<GapLabelEntry<T>>,
}

impl<T: Real> GapLabelReport<T> {
    pub fn passes(&self) -> bool {
        self.entries.iter().all(GapLabelEntry::passes)
    }

    pub fn selected(&self) -> impl Iterator<Item = &GapLabelEntry<T>> {
        self.entries.iter().filter(|e| e.selected)
    }
}

/// IDS plateau and FD edges at every catalog gap wider than the local level
/// spacing.
pub fn gap_label_check<T: Real>(
    cat: &GapCatalog<T>,
    p: &FourierPotential<T>,
    length: T,
    step: T,
) -> Result<GapLabelReport<T>> {
    if !cat.unresolved.is_empty() {
        return Err(Error::InvalidInput("catalog has unresolved labels".into()));
    }
    let dir = FiniteDifferenceModel::new(p, length, step, Boundary::Dirichlet)?;
    let neu = FiniteDifferenceModel::new(p, length, step, Boundary::Neumann)?;
    let pi = T::PI();
    let two = lit::<T>(2.0);
    let ids = |m: &FiniteDifferenceModel<T>, e: T| lit::<T>(m.count_below(e) as f64) / length;

    let entries = cat
        .gaps
        .par_iter()
        .map(|g| {
            let k = (g.label.dot(&cat.omega) / two).abs();
            let width = g.width();
            let resolution = two * pi * k / length;
            let expected = two * k / (two * pi);
            let selected = width > resolution;
            let center = (g.e_minus + g.e_plus) / two;
            let edge_tolerance = (lit::<T>(4.0) * pi / length).max(lit::<T>(10.0) * step * step * center);
            let mut entry = GapLabelEntry {
                label: g.label.clone(),
                width,
                resolution,
                selected,
                expected,
                plateau: (T::zero(), T::zero()),
                variation: T::zero(),
                fd_edges: Vec::new(),
                edge_tolerance,
                plateau_ok: true,
                constant_ok: true,
                edges_ok: true,
            };
            if !selected {
                return entry;
            }
            let inset = g.err + width / lit(20.0);
            let probes = [g.e_minus + inset, center, g.e_plus - inset];
            let mut variation = T::zero();
            for m in [&dir, &neu] {
                let vals: Vec<T> = probes.iter().map(|&e| ids(m, e)).collect();
                let lo = vals.iter().copied().fold(T::infinity(), T::min);
                let hi = vals.iter().copied().fold(T::neg_infinity(), T::max);
                variation = variation.max(hi - lo);
            }
            entry.plateau = (ids(&dir, center), ids(&neu, center));
            entry.variation = variation;
            let five = lit::<T>(5.0) / length;
            entry.plateau_ok =
                (entry.plateau.0 - expected).abs() <= five && (entry.plateau.1 - expected).abs() <= five;
            entry.constant_ok = variation <= two / length;

            let window = edge_tolerance;
            let tol = lit::<T>(1e-12) * center.max(T::one());
            for m in [&dir, &neu] {
                let levels = m.eigenvalues_in(g.e_minus - window, g.e_plus + window, tol);
                let mut best: Option<(T, T)> = None;
                for w in levels.windows(2) {
                    if best.map_or(true, |b| w[1] - w[0] > b.1 - b.0) {
                        best = Some((w[0], w[1]));
                    }
                }
                let edges = best.unwrap_or((g.e_minus - window, g.e_plus + window));
                entry.edges_ok &= (edges.0 - g.e_minus).abs() <= edge_tolerance
                    && (edges.1 - g.e_plus).abs() <= edge_tolerance;
                entry.fd_edges.push(edges);
            }
            entry
        })
        .collect();
    Ok(GapLabelReport {
        length,
        step,
        entries,
    })
}
