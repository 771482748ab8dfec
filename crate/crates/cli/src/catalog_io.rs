//! Catalog CSV: a `#` preamble with the catalog scalars, a header
//! `m_1,..,m_nu,e_minus,e_plus,err`, then one row per listed gap. Reals are
//! written with 17 significant digits, which reads back bit-exactly.

use std::fmt::Write as _;

use quasispec::gaps::{Gap, GapCatalog};
use quasispec::LatticePoint;

use crate::config::ConfigError;

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn labels(v: &[LatticePoint]) -> String {
    if v.is_empty() {
        return "none".into();
    }
    v.iter()
        .map(|m| {
            m.components()
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect::<Vec<_>>()
        .join(";")
}

pub fn write_catalog(cat: &GapCatalog<f64>) -> String {
    let mut out = String::new();
    let omega: Vec<String> = cat.omega.iter().map(|&w| real(w)).collect();
    writeln!(out, "# nu = {}", cat.nu()).unwrap();
    writeln!(out, "# omega = {}", omega.join(" ")).unwrap();
    writeln!(out, "# eps = {}", real(cat.eps)).unwrap();
    writeln!(out, "# kappa0 = {}", real(cat.kappa0)).unwrap();
    writeln!(out, "# M = {}", cat.max_label).unwrap();
    writeln!(out, "# bottom = {}", real(cat.bottom)).unwrap();
    writeln!(out, "# bottom_err = {}", real(cat.bottom_err)).unwrap();
    writeln!(out, "# tail_bound = {}", real(cat.tail_bound)).unwrap();
    writeln!(out, "# unresolved = {}", labels(&cat.unresolved)).unwrap();
    writeln!(out, "# tie = {}", labels(&cat.tie)).unwrap();
    let head: Vec<String> = (1..=cat.nu()).map(|i| format!("m_{i}")).collect();
    writeln!(out, "{},e_minus,e_plus,err", head.join(",")).unwrap();
    for g in &cat.gaps {
        let m: Vec<String> = g.label.components().iter().map(|c| c.to_string()).collect();
        writeln!(out, "{},{},{},{}", m.join(","), real(g.e_minus), real(g.e_plus), real(g.err)).unwrap();
    }
    out
}

fn err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line: Some(line),
        message: message.into(),
    }
}

fn parse_real(line: usize, s: &str) -> Result<f64, ConfigError> {
    s.trim()
        .parse()
        .map_err(|_| err(line, format!("cannot parse '{s}' as a number")))
}

fn parse_labels(line: usize, s: &str, nu: usize) -> Result<Vec<LatticePoint>, ConfigError> {
    if s.trim() == "none" {
        return Ok(Vec::new());
    }
    s.split(';')
        .map(|item| {
            let c = item
                .split_whitespace()
                .map(|x| x.parse::<i64>().map_err(|_| err(line, format!("bad label '{item}'"))))
                .collect::<Result<Vec<_>, _>>()?;
            if c.len() != nu {
                return Err(err(line, format!("label '{item}' has {} components, expected {nu}", c.len())));
            }
            Ok(LatticePoint::from(c))
        })
        .collect()
}

pub fn read_catalog(text: &str) -> Result<GapCatalog<f64>, ConfigError> {
    let mut pre: Vec<(usize, String, String)> = Vec::new();
    let mut rows: Vec<(usize, &str)> = Vec::new();
    let mut header: Option<(usize, &str)> = None;
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if let Some(rest) = line.strip_prefix('#') {
            let (k, v) = rest
                .split_once('=')
                .ok_or_else(|| err(n, "preamble line must read '# key = value'"))?;
            pre.push((n, k.trim().to_string(), v.trim().to_string()));
        } else if line.trim().is_empty() {
            continue;
        } else if header.is_none() {
            header = Some((n, line));
        } else {
            rows.push((n, line));
        }
    }
    let field = |key: &str| -> Result<(usize, &str), ConfigError> {
        pre.iter()
            .find(|p| p.1 == key)
            .map(|p| (p.0, p.2.as_str()))
            .ok_or_else(|| ConfigError {
                line: None,
                message: format!("catalog preamble lacks '{key}'"),
            })
    };
    let real_field = |key: &str| -> Result<f64, ConfigError> {
        let (l, v) = field(key)?;
        parse_real(l, v)
    };

    let (l, v) = field("nu")?;
    let nu: usize = v.parse().map_err(|_| err(l, "bad nu"))?;
    let (l, v) = field("omega")?;
    let omega = v.split_whitespace().map(|s| parse_real(l, s)).collect::<Result<Vec<_>, _>>()?;
    if omega.len() != nu {
        return Err(err(l, format!("omega has {} components, expected {nu}", omega.len())));
    }
    let (l, v) = field("M")?;
    let max_label: u64 = v.parse().map_err(|_| err(l, "bad M"))?;
    let (l, v) = field("unresolved")?;
    let unresolved = parse_labels(l, v, nu)?;
    let (l, v) = field("tie")?;
    let tie = parse_labels(l, v, nu)?;

    let (hl, h) = header.ok_or_else(|| ConfigError {
        line: None,
        message: "catalog has no header".into(),
    })?;
    let expected: Vec<String> = (1..=nu)
        .map(|i| format!("m_{i}"))
        .chain(["e_minus", "e_plus", "err"].map(String::from))
        .collect();
    if h.split(',').map(str::trim).ne(expected.iter().map(String::as_str)) {
        return Err(err(hl, format!("header must read '{}'", expected.join(","))));
    }
    let mut gaps = Vec::with_capacity(rows.len());
    for (n, row) in rows {
        let cols: Vec<&str> = row.split(',').collect();
        if cols.len() != nu + 3 {
            return Err(err(n, format!("expected {} columns, found {}", nu + 3, cols.len())));
        }
        let label = cols[..nu]
            .iter()
            .map(|c| c.trim().parse::<i64>().map_err(|_| err(n, format!("bad label component '{c}'"))))
            .collect::<Result<Vec<_>, _>>()?;
        gaps.push(Gap {
            label: LatticePoint::from(label),
            e_minus: parse_real(n, cols[nu])?,
            e_plus: parse_real(n, cols[nu + 1])?,
            err: parse_real(n, cols[nu + 2])?,
        });
    }
    Ok(GapCatalog {
        bottom: real_field("bottom")?,
        bottom_err: real_field("bottom_err")?,
        gaps,
        max_label,
        tail_bound: real_field("tail_bound")?,
        eps: real_field("eps")?,
        kappa0: real_field("kappa0")?,
        omega,
        unresolved,
        tie,
    })
}
