//! Subcommands and the exit-code contract.

use std::fs;
use std::path::{Path, PathBuf};

use quasispec::dispersion::dispersion_at;
use quasispec::gaps::{build_catalog_detailed, canonical_labels, verify_bottom_separation, verify_gap_decay, verify_gap_separation, GapCatalog};
use quasispec::homogeneity::{certify, fit_separation_constants, proof_replay, ProofReplay, SpectrumSet, Verdict};
use quasispec::oracle::gap_label_check;
use quasispec::potential::{diophantine_scan, FourierPotential};
use quasispec::Error;
use sha2::{Digest, Sha256};

use crate::catalog_io::{read_catalog, write_catalog};
use crate::config::{hex, ConfigError, ProblemConfig};
use crate::report::{fmt_real, Report};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Validate,
    Dispersion,
    Gaps,
    Certify,
    Replay,
    Oracle,
    All,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Dispersion => "dispersion",
            Command::Gaps => "gaps",
            Command::Certify => "certify",
            Command::Replay => "replay",
            Command::Oracle => "oracle",
            Command::All => "all",
        }
    }
}

/// `0` all checks pass, `1` a verifier failed, `2` input or usage error,
/// `3` numerical non-convergence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExitStatus {
    Pass = 0,
    Fail = 1,
    NonConvergence = 3,
    InputError = 2,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Numerical(#[from] Error),
}

impl CliError {
    pub fn status(&self) -> ExitStatus {
        match self {
            CliError::Config(_) | CliError::Usage(_) | CliError::Io { .. } => ExitStatus::InputError,
            CliError::Numerical(e) => match e {
                Error::NonConvergence { .. }
                | Error::BudgetExhausted { .. }
                | Error::AmbiguousSelection { .. }
                | Error::ModeSelection(_)
                | Error::ClusterOverlap(_) => ExitStatus::NonConvergence,
                Error::GapOverlap(..) | Error::ConstantsTooWeak => ExitStatus::Fail,
                _ => ExitStatus::InputError,
            },
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// k values for `dispersion`; a default grid is used when absent.
    pub k_grid: Option<Vec<f64>>,
    /// Read the catalog from this CSV instead of building it.
    pub catalog: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub status: ExitStatus,
    pub files: Vec<PathBuf>,
    /// One line per step, `<command> <PASS|FAIL> <detail>`.
    pub lines: Vec<String>,
}

/// Enumeration radius, as a multiple of `M`, for localizing unlisted gaps.
const ENUM_FACTOR: u64 = 5;

struct Context<'a> {
    cfg: &'a ProblemConfig,
    p: FourierPotential<f64>,
    opts: &'a RunOptions,
    digest: String,
    catalog: Option<(GapCatalog<f64>, String)>,
    files: Vec<PathBuf>,
    lines: Vec<String>,
}

impl Context<'_> {
    fn write(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.opts.out_dir.join(name);
        fs::write(&path, text).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        self.files.push(path);
        Ok(())
    }

    fn catalog(&mut self) -> Result<(GapCatalog<f64>, String), CliError> {
        if let Some(c) = &self.catalog {
            return Ok(c.clone());
        }
        let cat = match &self.opts.catalog {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|source| CliError::Io {
                    path: path.clone(),
                    source,
                })?;
                let cat = read_catalog(&text)?;
                if cat.omega != self.cfg.omega || cat.eps != self.cfg.eps || cat.kappa0 != self.cfg.kappa0 {
                    return Err(CliError::Usage(format!(
                        "catalog {} was built for other omega/eps/kappa0",
                        path.display()
                    )));
                }
                cat
            }
            None => {
                let build = build_catalog_detailed(&self.p, self.cfg.max_label, self.cfg.radius)?;
                build.catalog
            }
        };
        let text = write_catalog(&cat);
        let digest = hex(&Sha256::digest(text.as_bytes()));
        self.catalog = Some((cat, digest));
        Ok(self.catalog.clone().expect("just set"))
    }

    fn finish(&mut self, cmd: Command, report: &Report, pass: bool, detail: &str) -> Result<ExitStatus, CliError> {
        self.write(&format!("{}.txt", cmd.name()), &report.render())?;
        let verdict = if pass { "PASS" } else { "FAIL" };
        self.lines.push(format!("{} {verdict} {detail}", cmd.name()));
        Ok(if pass { ExitStatus::Pass } else { ExitStatus::Fail })
    }
}

/// Runs `cmd` with worker parallelism bounded by `cfg.threads`.
pub fn run(cmd: Command, cfg: &ProblemConfig, opts: &RunOptions) -> Result<Outcome, CliError> {
    fs::create_dir_all(&opts.out_dir).map_err(|source| CliError::Io {
        path: opts.out_dir.clone(),
        source,
    })?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} threads: {e}", cfg.threads)))?;
    pool.install(|| {
        let mut ctx = Context {
            cfg,
            p: cfg.potential(),
            opts,
            digest: cfg.digest(),
            catalog: None,
            files: Vec::new(),
            lines: Vec::new(),
        };
        let steps: &[Command] = match cmd {
            Command::All => &[
                Command::Validate,
                Command::Dispersion,
                Command::Gaps,
                Command::Certify,
                Command::Replay,
                Command::Oracle,
            ],
            _ => std::slice::from_ref(&cmd),
        };
        let mut status = ExitStatus::Pass;
        for &step in steps {
            let s = match step {
                Command::Validate => validate(&mut ctx)?,
                Command::Dispersion => dispersion(&mut ctx)?,
                Command::Gaps => gaps(&mut ctx)?,
                Command::Certify => certify_step(&mut ctx)?,
                Command::Replay => replay(&mut ctx)?,
                Command::Oracle => oracle(&mut ctx)?,
                Command::All => unreachable!(),
            };
            status = status.max(s);
        }
        Ok(Outcome {
            status,
            files: ctx.files,
            lines: ctx.lines,
        })
    })
}

fn validate(ctx: &mut Context) -> Result<ExitStatus, CliError> {
    let violations = ctx.p.validate();
    let scan_radius = 2 * ctx.cfg.radius;
    let scan = diophantine_scan(ctx.p.freq(), scan_radius)?;
    let mut r = Report::new("validate", &ctx.digest);
    r.field("nu", ctx.cfg.nu)
        .field("coefficients", ctx.p.coeffs().len())
        .real("eps", ctx.cfg.eps)
        .real("kappa0", ctx.cfg.kappa0)
        .field("violations", violations.len());
    for v in &violations {
        r.field("violation", v);
    }
    r.field("diophantine_radius", scan_radius)
        .real("diophantine_worst_ratio", scan.worst_ratio)
        .field("diophantine_worst_n", &scan.worst_n)
        .real("a0", ctx.cfg.a0)
        .field("diophantine_holds_on_box", scan.holds_on_box);
    let pass = violations.is_empty() && scan.holds_on_box;
    let detail = match violations.first() {
        Some(v) => v.to_string(),
        None if !scan.holds_on_box => format!("diophantine ratio {} < a0 at {}", fmt_real(scan.worst_ratio), scan.worst_n),
        None => "potential admissible".into(),
    };
    ctx.finish(Command::Validate, &r, pass, &detail)
}

fn default_k_grid(cfg: &ProblemConfig) -> Vec<f64> {
    let reach = canonical_labels(cfg.nu, cfg.max_label)
        .iter()
        .map(|m| (m.dot(&cfg.omega) / 2.0).abs())
        .fold(0.0, f64::max)
        + 0.25;
    (0..=200).map(|j| reach * j as f64 / 200.0).collect()
}

fn dispersion(ctx: &mut Context) -> Result<ExitStatus, CliError> {
    use rayon::prelude::*;
    let grid = ctx.opts.k_grid.clone().unwrap_or_else(|| default_k_grid(ctx.cfg));
    let p = &ctx.p;
    let radius = ctx.cfg.radius;
    let rows: Vec<(f64, Result<(f64, f64), Error>)> = grid
        .par_iter()
        .map(|&k| (k, dispersion_at(p, k, radius).map(|s| (s.energy, s.trunc_error))))
        .collect();
    let mut csv = String::from("k,energy,trunc_error,status\n");
    let (mut ambiguous, mut max_trunc) = (0usize, 0.0f64);
    for (k, row) in rows {
        match row {
            Ok((e, t)) => {
                max_trunc = max_trunc.max(t);
                csv += &format!("{},{},{},ok\n", fmt_real(k), fmt_real(e), fmt_real(t));
            }
            Err(Error::AmbiguousSelection { .. }) => {
                ambiguous += 1;
                csv += &format!("{},nan,nan,ambiguous\n", fmt_real(k));
            }
            Err(e) => return Err(e.into()),
        }
    }
    ctx.write("dispersion.csv", &csv)?;
    let mut r = Report::new("dispersion", &ctx.digest);
    r.field("samples", grid.len())
        .field("ambiguous", ambiguous)
        .real("max_trunc_error", max_trunc)
        .field("box_radius", radius)
        .real("eps0_assumed", ctx.cfg.eps0);
    ctx.finish(
        Command::Dispersion,
        &r,
        true,
        &format!("{} samples, {ambiguous} near-resonant", grid.len()),
    )
}

fn gaps(ctx: &mut Context) -> Result<ExitStatus, CliError> {
    let violations = ctx.p.validate();
    let (cat, cat_digest) = ctx.catalog()?;
    ctx.write("catalog.csv", &write_catalog(&cat))?;
    let decay = verify_gap_decay(&cat);
    let mut r = Report::new("gaps", &ctx.digest);
    r.field("catalog_digest", &cat_digest)
        .field("max_label", cat.max_label)
        .field("listed", cat.gaps.len())
        .field("open", cat.open_gaps().count())
        .real("bottom", cat.bottom)
        .real("bottom_err", cat.bottom_err)
        .real("total_width", cat.total_width())
        .real("tail_bound", cat.tail_bound)
        .field("unresolved", cat.unresolved.len())
        .field("ties", cat.tie.len())
        .field("overlaps", cat.overlaps().len())
        .field("potential_violations", violations.len());
    for v in &violations {
        r.field("violation", v);
    }
    r.field("decay_pass", decay.passes()).real("decay_worst_margin", decay.worst_margin);
    if let Some(m) = &decay.worst_label {
        r.field("decay_worst_label", m);
    }
    for m in &decay.violations {
        r.field("decay_violation", m);
    }
    let mut pass = violations.is_empty() && decay.passes();
    if let (Some(a), Some(b)) = (ctx.cfg.a, ctx.cfg.b) {
        let sep = verify_gap_separation(&cat, a, b)?;
        let bottom = verify_bottom_separation(&cat, a, b)?;
        r.real("a", a)
            .real("b", b)
            .field("separation_pass", sep.passes())
            .real("separation_worst_margin", sep.worst_margin)
            .field("bottom_separation_pass", bottom.passes())
            .real("bottom_separation_worst_margin", bottom.worst_margin);
        pass &= sep.passes() && bottom.passes();
    }
    let detail = match (violations.first(), decay.violations.first()) {
        (Some(v), _) => v.to_string(),
        (None, Some(m)) => format!("gap {m} exceeds the decay bound"),
        _ => format!("{} gaps listed", cat.gaps.len()),
    };
    ctx.finish(Command::Gaps, &r, pass, &detail)
}

fn certify_step(ctx: &mut Context) -> Result<ExitStatus, CliError> {
    let (cat, cat_digest) = ctx.catalog()?;
    let enum_radius = ENUM_FACTOR * cat.max_label;
    let set = SpectrumSet::from_catalog_localized(&cat, &ctx.p, enum_radius, ctx.cfg.radius)?;
    let (tau, smin, smax) = (ctx.cfg.tau, ctx.cfg.sigma_min, ctx.cfg.sigma_max);
    let mut cert = certify(&set, tau, smin, smax)?;
    cert.provenance = cat_digest;
    let mut r = Report::new("certify", &ctx.digest);
    r.field("verdict", cert.verdict)
        .real("min_ratio", cert.min_ratio)
        .real("tau", tau)
        .real("sigma_min", smin)
        .real("sigma_max", smax)
        .real("worst_e", cert.worst.0)
        .real("worst_sigma", cert.worst.1)
        .field("tested_points", cert.tested_points)
        .real("error_budget", cert.error_budget)
        .field("tail_enumeration_radius", enum_radius)
        .field(
            "advisories",
            if cert.advisories.is_empty() { "none".to_string() } else { cert.advisories.join("; ") },
        )
        .field("catalog_digest", &cert.provenance);
    match cert.witness {
        Some((e, s, q)) => r.field("witness", format!("{} {} {}", fmt_real(e), fmt_real(s), fmt_real(q))),
        None => r.field("witness", "none"),
    };
    r.summary = Some(format!(
        "{} {} {} {} {}",
        cert.verdict,
        fmt_real(cert.min_ratio),
        fmt_real(tau),
        fmt_real(smin),
        fmt_real(smax)
    ));
    let pass = cert.verdict == Verdict::Pass;
    let detail = match cert.verdict {
        Verdict::Advisory => format!("advisory min_ratio {}", fmt_real(cert.min_ratio)),
        _ => format!("min_ratio {}", fmt_real(cert.min_ratio)),
    };
    ctx.finish(Command::Certify, &r, pass, &detail)
}

/// `b` values scanned when the config leaves the separation constants open.
pub fn default_b_grid() -> Vec<f64> {
    (1..=40).map(|j| 0.25 * j as f64).collect()
}

fn replay(ctx: &mut Context) -> Result<ExitStatus, CliError> {
    let (cat, cat_digest) = ctx.catalog()?;
    let fitted = match (ctx.cfg.a, ctx.cfg.b) {
        (Some(a), Some(b)) => proof_replay(&cat, a, b).map(|r| (r, false)),
        _ => fit_separation_constants(&cat, &default_b_grid()).map(|f| (f.replay, true)),
    };
    let mut r = Report::new("replay", &ctx.digest);
    r.field("catalog_digest", &cat_digest);
    let (replay, fit): (ProofReplay<f64>, bool) = match fitted {
        Ok(x) => x,
        Err(Error::ConstantsTooWeak) => {
            r.field("verdict", "FAIL").field("reason", Error::ConstantsTooWeak);
            return ctx.finish(Command::Replay, &r, false, "separation constants too weak");
        }
        Err(e) => return Err(e.into()),
    };
    let smin = ctx.cfg.sigma_min;
    let smax = ctx.cfg.sigma_max;
    let pass = replay.passes() && replay.covers(smin) && replay.large_branch_closes(smax);
    r.field("verdict", if pass { "PASS" } else { "FAIL" })
        .field("constants", if fit { "fitted" } else { "given" })
        .real("a", replay.a)
        .real("b", replay.b)
        .real("alpha", replay.alpha)
        .real("beta", replay.beta)
        .field("separation_ok", replay.separation_ok)
        .real("sigma0", replay.sigma0)
        .field("first_good_step", replay.first_good_step)
        .real("small_branch_margin", replay.small_branch_margin)
        .real("total_gap_length", replay.total_gap_length)
        .real("large_branch_margin", replay.large_branch_margin)
        .real("sigma_min", smin)
        .field("covers_sigma_min", replay.covers(smin))
        .real("sigma_max", smax)
        .field("large_branch_closes_at_sigma_max", replay.large_branch_closes(smax));
    let detail = format!("sigma0 {} a {} b {}", fmt_real(replay.sigma0), fmt_real(replay.a), fmt_real(replay.b));
    ctx.finish(Command::Replay, &r, pass, &detail)
}

fn oracle(ctx: &mut Context) -> Result<ExitStatus, CliError> {
    let (cat, cat_digest) = ctx.catalog()?;
    let report = gap_label_check(&cat, &ctx.p, ctx.cfg.length, ctx.cfg.step)?;
    let mut r = Report::new("oracle", &ctx.digest);
    r.field("catalog_digest", &cat_digest)
        .real("L", report.length)
        .real("h", report.step)
        .field("selected", report.selected().count());
    for e in report.selected() {
        let fd: Vec<String> = e
            .fd_edges
            .iter()
            .map(|(a, b)| format!("{} {}", fmt_real(*a), fmt_real(*b)))
            .collect();
        r.field(
            &format!("gap {}", e.label),
            format!(
                "width {} expected {} plateau {} {} variation {} fd_edges {} tolerance {} pass {}",
                fmt_real(e.width),
                fmt_real(e.expected),
                fmt_real(e.plateau.0),
                fmt_real(e.plateau.1),
                fmt_real(e.variation),
                fd.join(" | "),
                fmt_real(e.edge_tolerance),
                e.passes()
            ),
        );
    }
    let pass = report.passes();
    let detail = format!("{} gaps resolved by the grid", report.selected().count());
    ctx.finish(Command::Oracle, &r, pass, &detail)
}

/// Reads and parses a config file, locating errors by path and line.
pub fn load_config(path: &Path) -> Result<ProblemConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    crate::config::parse_config(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}
