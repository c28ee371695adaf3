//! Subcommand implementations on top of `layerlab::harness`.

use crate::config::RunConfig;
use crate::error::CliError;
use layerlab::harness::{
    limit_check, rn_check, selftest, tail_check, Batch, Check, Functional, LimitKind, LimitReport, QSpec, RnReport,
    TailReport,
};
use layerlab::special::zeta;
use layerlab::stats::default_grid;
use layerlab::{draw_for_path, uniform_grid, SamplePath};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub seed: u64,
    /// Largest magnitude a discarded series term can have, per process.
    pub truncation_bounds: BTreeMap<String, f64>,
    pub wall_time_seconds: f64,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

fn batch(c: &RunConfig) -> Batch {
    Batch::new(c.horizon, c.paths, c.seed, c.gamma_cap).with_gaussian_remainder(c.gaussian_remainder)
}

/// Rows `t,x1..xd`, numbers with 17 significant digits.
pub fn path_csv(p: &SamplePath) -> String {
    let mut s = String::with_capacity(p.grid.len() * (p.dim + 1) * 24);
    s.push('t');
    for j in 1..=p.dim {
        let _ = write!(s, ",x{j}");
    }
    s.push('\n');
    for (g, t) in p.grid.iter().enumerate() {
        let _ = write!(s, "{t:.16e}");
        for x in p.value(g) {
            let _ = write!(s, ",{x:.16e}");
        }
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct PathJson<'a> {
    t: &'a [f64],
    x: Vec<&'a [f64]>,
}

pub fn path_json(p: &SamplePath) -> Result<String, CliError> {
    let x = (0..p.grid.len()).map(|g| p.value(g)).collect();
    let mut s = serde_json::to_string(&PathJson { t: &p.grid, x }).map_err(|e| CliError::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    std::fs::write(path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Simulates the main process and its companions on shared draws and
/// writes one file per process per path plus the manifest.
pub fn simulate(c: &RunConfig) -> Result<Manifest, CliError> {
    c.validate()?;
    let start = Instant::now();
    let sigma = c.sigma()?;
    let main = c.process_spec()?;
    let mut procs = vec![main.clone()];
    procs.extend(c.companions()?);
    let tags: Vec<String> = procs.iter().map(|p| p.tag()).collect();
    for (i, t) in tags.iter().enumerate() {
        if tags[..i].contains(t) {
            return Err(CliError::Config(format!("process '{t}' requested twice")));
        }
    }
    let mut bounds = BTreeMap::new();
    for p in &procs {
        bounds.insert(p.tag(), p.truncation_bound(&sigma, c.horizon, c.gamma_cap)?);
    }
    let grid = uniform_grid(c.horizon, c.grid_n);
    let features = layerlab::DrawFeatures { gaussian_remainder: c.gaussian_remainder, ..main.features() };
    let rendered: Result<Vec<Vec<String>>, CliError> = layerlab::parallel::par_map_paths(c.paths, |i| {
        let draw = draw_for_path(c.seed, i as u64, c.horizon, &sigma, c.gamma_cap, &features)?;
        procs
            .iter()
            .map(|p| {
                let path = p.path(&sigma, &draw, &grid)?;
                if c.format == "json" {
                    path_json(&path)
                } else {
                    Ok(path_csv(&path))
                }
            })
            .collect()
    })
    .into_iter()
    .collect();
    let rendered = rendered?;

    let out = PathBuf::from(&c.out);
    std::fs::create_dir_all(&out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let width = (c.paths - 1).to_string().len().max(4);
    let mut files = Vec::new();
    for (i, bodies) in rendered.iter().enumerate() {
        for (tag, body) in tags.iter().zip(bodies) {
            let name = format!("{tag}_path{i:0width$}.{}", c.format);
            write_file(&out.join(&name), body)?;
            files.push(name);
        }
    }
    let manifest = Manifest {
        config: c.clone(),
        seed: c.seed,
        truncation_bounds: bounds,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        files,
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_file(&out.join(MANIFEST_NAME), &text)?;
    Ok(manifest)
}

/// `default` (21 points per axis on [-5, 5]) or `lo:hi:n` per axis.
pub fn parse_y_grid(s: &str, d: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let s = s.trim();
    if s == "default" {
        return Ok(default_grid(d));
    }
    let bad = || CliError::Config(format!("y-grid '{s}' must be 'default' or lo:hi:n"));
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts.as_slice() else { return Err(bad()) };
    let lo: f64 = lo.parse().map_err(|_| bad())?;
    let hi: f64 = hi.parse().map_err(|_| bad())?;
    let n: usize = n.parse().map_err(|_| bad())?;
    if n < 2 || !(hi > lo) {
        return Err(bad());
    }
    let axis: Vec<f64> = (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect();
    let mut out: Vec<Vec<f64>> = vec![vec![]];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
    }
    Ok(out)
}

pub fn limit(c: &RunConfig, kind: LimitKind, h: f64, y_grid: &str, threshold: f64) -> Result<LimitReport, CliError> {
    c.validate()?;
    if c.process != "layered" {
        return Err(CliError::Config("limit-check needs --process layered".into()));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(CliError::Config(format!("h = {h} must be positive")));
    }
    if kind == LimitKind::Long && c.beta == 2.0 {
        return Err(CliError::Config(
            "beta = 2: the long-time rescaling does not converge (neither stable nor Gaussian limit applies)".into(),
        ));
    }
    let sigma = c.sigma()?;
    let grid = parse_y_grid(y_grid, sigma.dim())?;
    Ok(limit_check(c.alpha, c.beta, c.q_spec()?, &sigma, kind, h, &batch(c), &grid, threshold)?)
}

pub fn rn(c: &RunConfig, functional: &str) -> Result<RnReport, CliError> {
    c.validate()?;
    if c.q_spec()? != QSpec::Canonical {
        return Err(CliError::Config("rn supports the canonical q only".into()));
    }
    if c.gaussian_remainder {
        return Err(CliError::Config("rn needs pure-jump paths; set gaussian_remainder = false".into()));
    }
    if c.alpha == c.beta {
        return Err(CliError::Config("alpha = beta: the two measures coincide, nothing to check".into()));
    }
    let f: Functional = functional.parse().map_err(|e: layerlab::Error| CliError::Config(e.to_string()))?;
    Ok(rn_check(c.alpha, c.beta, &c.sigma()?, &batch(c), c.grid_n, f)?)
}

pub fn tail(c: &RunConfig, k: Option<usize>) -> Result<TailReport, CliError> {
    c.validate()?;
    Ok(tail_check(&c.process_spec()?, &c.sigma()?, &batch(c), k)?)
}

/// Runs the invariant suite; `corrupt_zeta` perturbs zeta by 1e-3.
pub fn run_selftest(corrupt_zeta: bool) -> Result<Vec<Check>, CliError> {
    let checks = if corrupt_zeta { selftest(&|s| zeta(s) * (1.0 + 1e-3))? } else { selftest(&zeta)? };
    Ok(checks)
}

pub fn selftest_table(checks: &[Check]) -> String {
    let w = checks.iter().map(|c| c.name.len()).max().unwrap_or(5).max(5);
    let mut s = format!("{:<w$}  {:>12}  {:>12}  {:>11}  result\n", "check", "value", "threshold", "margin");
    for c in checks {
        let _ = writeln!(
            s,
            "{:<w$}  {:>12.4e}  {:>12.4e}  {:>11.3e}  {}",
            c.name,
            c.value,
            c.threshold,
            c.margin(),
            if c.pass { "PASS" } else { "FAIL" }
        );
    }
    s
}
