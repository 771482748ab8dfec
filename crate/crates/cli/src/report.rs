use std::fmt::Write as _;

/// Plain-text report: title, config digest, `key: value` fields in
/// insertion order, then an optional machine-readable summary line.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub title: String,
    pub digest: String,
    pub fields: Vec<(String, String)>,
    pub summary: Option<String>,
}

impl Report {
    pub fn new(title: &str, digest: &str) -> Self {
        Report {
            title: title.into(),
            digest: digest.into(),
            fields: Vec::new(),
            summary: None,
        }
    }

    pub fn field(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.fields.push((key.into(), value.to_string()));
        self
    }

    pub fn real(&mut self, key: &str, value: f64) -> &mut Self {
        self.field(key, fmt_real(value))
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        writeln!(out, "quasispec {}", self.title).unwrap();
        writeln!(out, "config_digest: {}", self.digest).unwrap();
        for (k, v) in &self.fields {
            writeln!(out, "{k}: {v}").unwrap();
        }
        if let Some(s) = &self.summary {
            writeln!(out, "{s}").unwrap();
        }
        out
    }
}

pub fn fmt_real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}
