//! Line-based problem definitions.
//!
//! ```text
//! # comment
//! nu = 2
//! omega = 1 1.4142135623730951
//! eps = 1e-3
//! coeff 1 0 3.6e-4 1.2e-4
//! ```
//!
//! `coeff n1 .. n_nu re im` sets `c(n)`; the conjugate partner `c(-n)` is
//! filled in unless it is given on its own line.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex;
use quasispec::potential::{FourierPotential, FrequencyVector};
use quasispec::LatticePoint;
use sha2::{Digest, Sha256};

pub const KEYS: [&str; 17] = [
    "nu", "omega", "a0", "b0", "eps", "kappa0", "M", "N", "sigma_min", "sigma_max", "tau", "a", "b", "eps0", "L",
    "h", "threads",
];

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    /// 1-based line, absent for errors about the file as a whole.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn at(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line: Some(line),
        message: message.into(),
    }
}

fn whole(message: impl Into<String>) -> ConfigError {
    ConfigError {
        line: None,
        message: message.into(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemConfig {
    pub nu: usize,
    pub omega: Vec<f64>,
    pub a0: f64,
    pub b0: f64,
    pub eps: f64,
    pub kappa0: f64,
    /// Coefficients in lattice order, both members of every pair.
    pub coeffs: BTreeMap<LatticePoint, Complex<f64>>,
    /// Catalog label radius.
    pub max_label: u64,
    /// Galerkin box radius.
    pub radius: u64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub tau: f64,
    /// Separation constants; fitted from the catalog when absent.
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub eps0: f64,
    pub length: f64,
    pub step: f64,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
}

impl ProblemConfig {
    pub fn frequency(&self) -> FrequencyVector<f64> {
        FrequencyVector::new(self.omega.clone(), self.a0, self.b0).expect("checked by parse_config")
    }

    pub fn potential(&self) -> FourierPotential<f64> {
        FourierPotential::new(self.frequency(), self.coeffs.clone(), self.eps, self.kappa0)
            .expect("checked by parse_config")
    }

    /// Every field in a fixed order with shortest round-trip decimals.
    pub fn canonical_text(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        let mut out = String::new();
        out += &format!("nu = {}\n", self.nu);
        out += &format!("omega = {}\n", list(&self.omega));
        out += &format!("a0 = {:?}\nb0 = {:?}\n", self.a0, self.b0);
        out += &format!("eps = {:?}\nkappa0 = {:?}\n", self.eps, self.kappa0);
        out += &format!("M = {}\nN = {}\n", self.max_label, self.radius);
        out += &format!("sigma_min = {:?}\nsigma_max = {:?}\ntau = {:?}\n", self.sigma_min, self.sigma_max, self.tau);
        if let (Some(a), Some(b)) = (self.a, self.b) {
            out += &format!("a = {a:?}\nb = {b:?}\n");
        }
        out += &format!("eps0 = {:?}\nL = {:?}\nh = {:?}\n", self.eps0, self.length, self.step);
        out += &format!("threads = {}\n", self.threads);
        for (n, c) in &self.coeffs {
            let idx: Vec<String> = n.components().iter().map(|x| x.to_string()).collect();
            out += &format!("coeff {} {:?} {:?}\n", idx.join(" "), c.re, c.im);
        }
        out
    }

    /// SHA-256 of [`Self::canonical_text`], hex encoded.
    pub fn digest(&self) -> String {
        hex(&Sha256::digest(self.canonical_text().as_bytes()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn number(line: usize, key: &str, s: &str) -> Result<f64, ConfigError> {
    let v: f64 = s
        .parse()
        .map_err(|_| at(line, format!("{key}: cannot parse '{s}' as a number")))?;
    if !v.is_finite() {
        return Err(at(line, format!("{key}: value must be finite")));
    }
    Ok(v)
}

fn integer<I: std::str::FromStr>(line: usize, key: &str, s: &str) -> Result<I, ConfigError> {
    s.parse()
        .map_err(|_| at(line, format!("{key}: cannot parse '{s}' as a nonnegative integer")))
}

/// Parses a problem definition. Fields not given take the defaults
/// `a0 = 0.5`, `b0 = nu + 0.5`, `kappa0 = 1`, `eps` = the smallest value
/// admitting the coefficients, `M = 4`, `N = 8`, `sigma_min = 1e-3`,
/// `sigma_max = 10`, `tau = 0.5`, `eps0 = 1e-2`, `L = 2000`, `h = 0.02`,
/// `threads = 0`.
pub fn parse_config(text: &str) -> Result<ProblemConfig, ConfigError> {
    let mut values: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    let mut raw_coeffs: Vec<(usize, Vec<i64>, Complex<f64>)> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix("coeff").filter(|r| r.starts_with(char::is_whitespace)) {
            let fields: Vec<&str> = rest.split_whitespace().collect();
            if fields.len() < 3 {
                return Err(at(line, "coeff needs lattice indices followed by re and im"));
            }
            let (idx, parts) = fields.split_at(fields.len() - 2);
            let n = idx
                .iter()
                .map(|s| {
                    s.parse::<i64>()
                        .map_err(|_| at(line, format!("coeff: cannot parse index '{s}'")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let re = number(line, "coeff", parts[0])?;
            let im = number(line, "coeff", parts[1])?;
            raw_coeffs.push((line, n, Complex::new(re, im)));
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(at(line, format!("expected 'key = value' or a coeff line, got '{content}'")));
        };
        let (key, value) = (key.trim(), value.trim());
        let Some(&key) = KEYS.iter().find(|k| **k == key) else {
            return Err(at(line, format!("unknown key '{key}'")));
        };
        if value.is_empty() {
            return Err(at(line, format!("{key}: missing value")));
        }
        if let Some((first, _)) = values.insert(key, (line, value)) {
            return Err(at(line, format!("{key}: already set on line {first}")));
        }
    }

    let get = |key: &str| values.get(key).copied();
    let real = |key: &str, default: f64| -> Result<f64, ConfigError> {
        match get(key) {
            Some((l, v)) => number(l, key, v),
            None => Ok(default),
        }
    };
    let count = |key: &str, default: u64| -> Result<u64, ConfigError> {
        match get(key) {
            Some((l, v)) => integer(l, key, v),
            None => Ok(default),
        }
    };

    let omega = match get("omega") {
        Some((l, v)) => v
            .split_whitespace()
            .map(|s| number(l, "omega", s))
            .collect::<Result<Vec<_>, _>>()?,
        None => return Err(whole("missing required key 'omega'")),
    };
    let nu = match get("nu") {
        Some((l, v)) => {
            let nu: usize = integer(l, "nu", v)?;
            if nu != omega.len() {
                return Err(at(l, format!("nu = {nu} but omega has {} components", omega.len())));
            }
            nu
        }
        None => omega.len(),
    };
    if nu == 0 {
        return Err(whole("omega must have at least one component"));
    }

    let a0 = real("a0", 0.5)?;
    let b0 = real("b0", nu as f64 + 0.5)?;
    if !(b0 > nu as f64) {
        let l = get("b0").map(|x| x.0);
        return Err(ConfigError {
            line: l,
            message: format!("b0 = {b0} violates the standing assumption nu < b0 (nu = {nu})"),
        });
    }
    if !(a0 > 0.0) {
        return Err(ConfigError {
            line: get("a0").map(|x| x.0),
            message: format!("a0 = {a0} must be positive"),
        });
    }
    let kappa0 = real("kappa0", 1.0)?;
    if !(kappa0 > 0.0 && kappa0 <= 1.0) {
        return Err(ConfigError {
            line: get("kappa0").map(|x| x.0),
            message: format!("kappa0 = {kappa0} must lie in (0, 1]"),
        });
    }

    let mut coeffs: BTreeMap<LatticePoint, Complex<f64>> = BTreeMap::new();
    let mut given: BTreeMap<LatticePoint, usize> = BTreeMap::new();
    for (line, n, c) in &raw_coeffs {
        if n.len() != nu {
            return Err(at(*line, format!("coeff has {} indices, expected nu = {nu}", n.len())));
        }
        let n = LatticePoint::from(n.clone());
        if n.is_zero() {
            return Err(at(*line, "coefficient at origin forbidden"));
        }
        if let Some(first) = given.insert(n.clone(), *line) {
            return Err(at(*line, format!("coeff {n} already set on line {first}")));
        }
        coeffs.insert(n, *c);
    }
    let partners: Vec<(LatticePoint, Complex<f64>)> = coeffs
        .iter()
        .filter(|(n, _)| !coeffs.contains_key(&-*n))
        .map(|(n, c)| (-n, c.conj()))
        .collect();
    coeffs.extend(partners);

    let admissible_eps = coeffs
        .iter()
        .map(|(n, c)| c.norm() * (kappa0 * n.norm1() as f64).exp())
        .fold(0.0, f64::max);
    let eps = real("eps", admissible_eps)?;
    if !(eps >= 0.0) {
        return Err(ConfigError {
            line: get("eps").map(|x| x.0),
            message: format!("eps = {eps} must be nonnegative"),
        });
    }

    let freq = FrequencyVector::new(omega.clone(), a0, b0).map_err(|e| whole(e.to_string()))?;
    FourierPotential::new(freq, coeffs.clone(), eps, kappa0).map_err(|e| whole(e.to_string()))?;

    let max_label = count("M", 4)?;
    let radius = count("N", 8)?;
    if max_label == 0 || radius == 0 {
        return Err(whole("M and N must be positive"));
    }
    let sigma_min = real("sigma_min", 1e-3)?;
    let sigma_max = real("sigma_max", 10.0)?;
    if !(sigma_min > 0.0 && sigma_max > sigma_min) {
        return Err(whole(format!("need 0 < sigma_min < sigma_max, got {sigma_min}, {sigma_max}")));
    }
    let tau = real("tau", 0.5)?;
    if !(tau > 0.0) {
        return Err(at(get("tau").map_or(0, |x| x.0), "tau must be positive"));
    }
    let a = get("a").map(|(l, v)| number(l, "a", v)).transpose()?;
    let b = get("b").map(|(l, v)| number(l, "b", v)).transpose()?;
    if a.is_some() != b.is_some() {
        return Err(whole("a and b must be given together"));
    }
    if let (Some(a), Some(b)) = (a, b) {
        if !(a > 0.0 && b > 0.0) {
            return Err(whole(format!("separation constants a = {a}, b = {b} must be positive")));
        }
    }
    let eps0 = real("eps0", 1e-2)?;
    let length = real("L", 2000.0)?;
    let step = real("h", 0.02)?;
    if !(eps0 > 0.0 && length > 0.0 && step > 0.0) {
        return Err(whole("eps0, L and h must be positive"));
    }
    let threads = count("threads", 0)? as usize;

    Ok(ProblemConfig {
        nu,
        omega,
        a0,
        b0,
        eps,
        kappa0,
        coeffs,
        max_label,
        radius,
        sigma_min,
        sigma_max,
        tau,
        a,
        b,
        eps0,
        length,
        step,
        threads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse_config("omega = 1\ncoeff 1 1e-3 0\n").unwrap();
        assert_eq!(c.nu, 1);
        assert_eq!(c.coeffs.len(), 2);
        assert_eq!(c.coeffs[&LatticePoint::from([-1])], Complex::new(1e-3, -0.0));
        assert_eq!(c.eps, 1e-3 * 1f64.exp());
        assert_eq!((c.max_label, c.radius, c.tau, c.threads), (4, 8, 0.5, 0));
        assert!(c.potential().validate().is_empty());
    }

    #[test]
    fn origin_coefficient_is_rejected() {
        let e = parse_config("omega = 1\n\ncoeff 0 1 0\n").unwrap_err();
        assert_eq!(e.line, Some(3));
        assert!(e.message.contains("coefficient at origin forbidden"));
    }

    #[test]
    fn b0_must_exceed_nu() {
        let e = parse_config("nu = 2\nomega = 1 1.5\nb0 = 2\n").unwrap_err();
        assert_eq!(e.line, Some(3));
        assert!(e.message.contains("nu < b0"), "{e}");
    }

    #[test]
    fn syntax_errors_carry_lines() {
        for (text, line) in [
            ("omega = 1\nfoo = 2\n", 2),
            ("omega = 1\neps 2\n", 2),
            ("omega = 1\neps = x\n", 2),
            ("omega = 1\neps = 1\neps = 2\n", 3),
            ("omega = 1\ncoeff 1 2\n", 2),
            ("omega = 1\ncoeff 1 1 1e-3 0\n", 2),
            ("nu = 2\nomega = 1\n", 1),
        ] {
            let e = parse_config(text).unwrap_err();
            assert_eq!(e.line, Some(line), "{text:?}: {e}");
        }
        assert_eq!(parse_config("nu = 1\n").unwrap_err().line, None);
    }

    #[test]
    fn full_precision_and_comments() {
        let c = parse_config("# header\nomega = 0.1000000000000000055511151231257827 # tail\nM = 3\n").unwrap();
        assert_eq!(c.omega[0], 0.1);
        assert_eq!(c.max_label, 3);
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = parse_config("omega = 1\ncoeff 1 1e-3 0\n").unwrap();
        let b = parse_config("coeff 1 1e-3 0\n# same problem\nomega = 1\n").unwrap();
        let c = parse_config("omega = 1\ncoeff 1 1e-3 0\ntau = 0.4\n").unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn canonical_text_reparses_to_the_same_config() {
        let a = parse_config("nu = 2\nomega = 1 1.4142135623730951\ncoeff 1 -1 1e-4 2e-5\na = 0.1\nb = 1\n").unwrap();
        assert_eq!(parse_config(&a.canonical_text()).unwrap(), a);
    }
}
