//! Integer lattice points of `Z^nu`, l1 boxes and shell counts.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Neg, Sub};

use crate::scalar::{from_i64, Real};

/// A point of the integer lattice `Z^nu`.
///
/// Ordering is lexicographic on the components; use [`LatticePoint::norm_order`]
/// for the `(|n|_1, lexicographic)` order used by label enumerations.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LatticePoint(Vec<i64>);

impl LatticePoint {
    pub fn new(components: Vec<i64>) -> Self {
        LatticePoint(components)
    }

    pub fn zero(nu: usize) -> Self {
        LatticePoint(vec![0; nu])
    }

    /// Unit vector along axis `axis`.
    pub fn unit(nu: usize, axis: usize) -> Self {
        let mut c = vec![0; nu];
        c[axis] = 1;
        LatticePoint(c)
    }

    pub fn components(&self) -> &[i64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    /// The l1 norm `|n|_1`, used as the lattice norm everywhere.
    pub fn norm1(&self) -> u64 {
        self.0.iter().map(|c| c.unsigned_abs()).sum()
    }

    /// `n . omega`.
    pub fn dot<T: Real>(&self, omega: &[T]) -> T {
        debug_assert_eq!(self.0.len(), omega.len());
        self.0
            .iter()
            .zip(omega)
            .fold(T::zero(), |acc, (&c, &w)| acc + from_i64::<T>(c) * w)
    }

    /// True when the first nonzero component is positive. Exactly one of
    /// `n`, `-n` is canonical for every nonzero `n`.
    pub fn is_canonical(&self) -> bool {
        self.0.iter().find(|&&c| c != 0).is_some_and(|&c| c > 0)
    }

    /// The canonical representative of `{n, -n}`.
    pub fn canonical(&self) -> Self {
        if self.is_canonical() || self.is_zero() {
            self.clone()
        } else {
            -self
        }
    }

    /// Total order by `(|n|_1, lexicographic)`.
    pub fn norm_order(&self, other: &Self) -> Ordering {
        self.norm1()
            .cmp(&other.norm1())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl fmt::Debug for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl Neg for &LatticePoint {
    type Output = LatticePoint;
    fn neg(self) -> LatticePoint {
        LatticePoint(self.0.iter().map(|c| -c).collect())
    }
}

impl Neg for LatticePoint {
    type Output = LatticePoint;
    fn neg(self) -> LatticePoint {
        -&self
    }
}

impl Sub for &LatticePoint {
    type Output = LatticePoint;
    fn sub(self, rhs: &LatticePoint) -> LatticePoint {
        debug_assert_eq!(self.0.len(), rhs.0.len());
        LatticePoint(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Add for &LatticePoint {
    type Output = LatticePoint;
    fn add(self, rhs: &LatticePoint) -> LatticePoint {
        debug_assert_eq!(self.0.len(), rhs.0.len());
        LatticePoint(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl From<Vec<i64>> for LatticePoint {
    fn from(v: Vec<i64>) -> Self {
        LatticePoint(v)
    }
}

impl<const K: usize> From<[i64; K]> for LatticePoint {
    fn from(v: [i64; K]) -> Self {
        LatticePoint(v.to_vec())
    }
}

/// All lattice points with `|n|_1 == r` in `Z^nu`, in lexicographic order.
pub fn shell(nu: usize, r: u64) -> Vec<LatticePoint> {
    let mut out = Vec::new();
    let mut buf = vec![0i64; nu];
    fill_shell(&mut buf, 0, r as i64, &mut out);
    out
}

fn fill_shell(buf: &mut [i64], pos: usize, remaining: i64, out: &mut Vec<LatticePoint>) {
    if pos + 1 == buf.len() {
        if remaining == 0 {
            buf[pos] = 0;
            out.push(LatticePoint(buf.to_vec()));
        } else {
            buf[pos] = -remaining;
            out.push(LatticePoint(buf.to_vec()));
            buf[pos] = remaining;
            out.push(LatticePoint(buf.to_vec()));
        }
        return;
    }
    for c in -remaining..=remaining {
        buf[pos] = c;
        fill_shell(buf, pos + 1, remaining - c.abs(), out);
    }
}

/// All nonzero lattice points with `|n|_1 <= radius`, in `(|n|_1, lex)` order.
pub fn nonzero_ball(nu: usize, radius: u64) -> Vec<LatticePoint> {
    (1..=radius).flat_map(|r| shell(nu, r)).collect()
}

/// Number of lattice points with `|n|_1 == r` in `Z^nu`, as an exact integer.
///
/// `#{|n|_1 = r} = sum_j 2^j C(nu, j) C(r-1, j-1)` for `r >= 1`.
pub fn shell_count(nu: usize, r: u64) -> u128 {
    if r == 0 {
        return 1;
    }
    let mut total: u128 = 0;
    for j in 1..=nu.min(r as usize) {
        total += (1u128 << j) * binomial(nu as u128, j as u128) * binomial(r as u128 - 1, j as u128 - 1);
    }
    total
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// The Galerkin index set: lattice points with `|n|_1 <= radius`, the origin
/// first and the rest in `(|n|_1, lex)` order.
#[derive(Clone, Debug)]
pub struct LatticeBox {
    nu: usize,
    radius: u64,
    points: Vec<LatticePoint>,
    index: HashMap<LatticePoint, usize>,
}

impl LatticeBox {
    pub fn new(nu: usize, radius: u64) -> Self {
        let mut points = Vec::with_capacity(Self::size_of(nu, radius));
        points.push(LatticePoint::zero(nu));
        points.extend(nonzero_ball(nu, radius));
        let index = points
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i))
            .collect();
        LatticeBox {
            nu,
            radius,
            points,
            index,
        }
    }

    /// `#{n in Z^nu : |n|_1 <= radius}` without building the box.
    pub fn size_of(nu: usize, radius: u64) -> usize {
        (0..=radius).map(|r| shell_count(nu, r) as usize).sum()
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn radius(&self) -> u64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[LatticePoint] {
        &self.points
    }

    pub fn index_of(&self, n: &LatticePoint) -> Option<usize> {
        self.index.get(n).copied()
    }

    pub fn contains(&self, n: &LatticePoint) -> bool {
        n.norm1() <= self.radius
    }
}
