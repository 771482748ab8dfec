//! Small-denominator bookkeeping: resonance points `k_n = -(n.omega)/2`,
//! windows of half-width `delta(n)`, resonant index sets and the clusters
//! generated from them by the reflections `T_m(n) = m - n`.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::lattice::{nonzero_ball, LatticePoint};
use crate::potential::FrequencyVector;
use crate::scalar::{from_i64, lit, Real};

/// `k_n = -(n.omega)/2`.
pub fn k_point<T: Real>(n: &LatticePoint, f: &FrequencyVector<T>) -> Result<T> {
    if n.is_zero() {
        return Err(Error::ZeroLabel);
    }
    Ok(-f.dot(n) / lit(2.0))
}

/// Window half-width `delta(n) = a0 (1 + |n|_1)^(-b0-3)`.
pub fn delta<T: Real>(n: &LatticePoint, f: &FrequencyVector<T>) -> Result<T> {
    if n.is_zero() {
        return Err(Error::ZeroLabel);
    }
    Ok(delta_of_norm(n.norm1(), f))
}

pub(crate) fn delta_of_norm<T: Real>(norm: u64, f: &FrequencyVector<T>) -> T {
    let base = T::one() + from_i64::<T>(norm as i64);
    f.a0() * base.powf(-f.b0() - lit(3.0))
}

/// Resonant indices of a quasi-momentum within a search box.
#[derive(Clone, Debug, PartialEq)]
pub struct ResonantSet {
    /// Sorted by `(|n|_1, lex)`.
    pub indices: Vec<LatticePoint>,
    /// Two consecutive indices share the same l1 norm.
    pub tie: bool,
    pub search_radius: u64,
}

impl ResonantSet {
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// All `n` with `0 < |n|_1 <= radius` and `|k - k_n| < delta(n)`.
pub fn resonant_indices<T: Real>(k: T, f: &FrequencyVector<T>, radius: u64) -> ResonantSet {
    let half = lit::<T>(0.5);
    let indices: Vec<LatticePoint> = nonzero_ball(f.nu(), radius)
        .into_iter()
        .filter(|n| {
            let kn = -f.dot(n) * half;
            (k - kn).abs() < delta_of_norm(n.norm1(), f)
        })
        .collect();
    let tie = indices.windows(2).any(|w| w[0].norm1() == w[1].norm1());
    ResonantSet {
        indices,
        tie,
        search_radius: radius,
    }
}

/// Resonant indices and the cluster they generate.
#[derive(Clone, Debug, PartialEq)]
pub struct ResonanceCluster<T> {
    pub k: T,
    pub resonant_indices: Vec<LatticePoint>,
    pub cluster: BTreeSet<LatticePoint>,
    pub tie: bool,
    pub search_radius: u64,
}

impl<T: Real> ResonanceCluster<T> {
    /// `l(k)`: index of the last resonant point.
    pub fn depth(&self) -> usize {
        self.resonant_indices.len() - 1
    }

    pub fn contains(&self, n: &LatticePoint) -> bool {
        self.cluster.contains(n)
    }
}

/// Builds the cluster `m^(l)(k)` from `m^(0) = {0, n^(0)}` by
/// `m^(l) = m^(l-1) ∪ T_{n^(l)}(m^(l-1))`.
pub fn build_cluster<T: Real>(
    k: T,
    f: &FrequencyVector<T>,
    radius: u64,
) -> Result<ResonanceCluster<T>> {
    let set = resonant_indices(k, f, radius);
    if set.is_empty() {
        return Err(Error::Nonresonant(k.to_f64().unwrap_or(f64::NAN)));
    }
    let cluster = cluster_from_indices(f.nu(), &set.indices);
    Ok(ResonanceCluster {
        k,
        resonant_indices: set.indices,
        cluster,
        tie: set.tie,
        search_radius: radius,
    })
}

/// The reflection recursion on an explicit list of resonant indices.
pub fn cluster_from_indices(nu: usize, indices: &[LatticePoint]) -> BTreeSet<LatticePoint> {
    let mut cluster = BTreeSet::new();
    cluster.insert(LatticePoint::zero(nu));
    let Some((first, rest)) = indices.split_first() else {
        return cluster;
    };
    cluster.insert(first.clone());
    for n in rest {
        let reflected: Vec<LatticePoint> = cluster.iter().map(|m| n - m).collect();
        cluster.extend(reflected);
    }
    cluster
}
