//! Subcommand implementations behind the `owc` binary. Each `cmd_*`
//! returns the process exit code; the binary only parses arguments.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use owc_core::config::{load_config, to_canonical_toml, ConfigFile};
use owc_core::oracle::{compare_with_pipeline, OracleGrids};
use owc_core::report;
use owc_core::orchestrator::pareto_sweep_mode;
use owc_core::{compute_r_max, default_init, power_sweep, run_algorithm1, BaselineMode, Error, ParetoPoint, Result};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_INFEASIBLE: u8 = 2;
pub const EXIT_NO_CONVERGENCE: u8 = 3;
pub const EXIT_BAND: u8 = 4;

pub const THREADS_ENV: &str = "OWC_THREADS";

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        Error::NoConvergence { .. } => EXIT_NO_CONVERGENCE,
        _ => EXIT_CONFIG,
    }
}

/// Caps the global worker pool at `OWC_THREADS` when set.
pub fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::ConfigParse(format!("{THREADS_ENV}={raw:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::ConfigParse(format!("{THREADS_ENV}: {e}")))
}

/// Provenance written next to every result set.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
    pub wall_clock: f64,
    pub command_line: String,
}

impl RunManifest {
    pub fn render(&self) -> String {
        format!(
            "config_hash: sha256:{}\nseed: {}\ntool_version: {}\nwall_clock_s: {}\ncommand_line: {}\n",
            self.config_hash,
            self.seed,
            self.tool_version,
            report::g9(self.wall_clock),
            self.command_line
        )
    }
}

/// SHA-256 of the canonical TOML form, so formatting and comments in the
/// source file do not change the digest.
pub fn config_hash(cfg: &ConfigFile) -> Result<String> {
    let canonical = to_canonical_toml(cfg)?;
    Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
}

/// Options every subcommand shares.
#[derive(Debug, Clone)]
pub struct Common {
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub command_line: String,
}

struct Session {
    cfg: ConfigFile,
    seed: u64,
    started: Instant,
    common: Common,
}

impl Session {
    fn open(common: &Common) -> Result<Session> {
        let started = Instant::now();
        let mut cfg = load_config(&common.config)?;
        if let Some(seed) = common.seed {
            cfg.solver.rng_seed = seed;
        }
        Ok(Session {
            seed: cfg.solver.rng_seed,
            cfg,
            started,
            common: common.clone(),
        })
    }

    /// Writes every `(name, body)` pair plus `manifest.txt` into the output
    /// directory.
    fn finish(&self, files: &[(&str, String)]) -> Result<()> {
        let dir = &self.common.out;
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        let manifest = RunManifest {
            config_hash: config_hash(&self.cfg)?,
            seed: self.seed,
            tool_version: format!("owc {}", env!("CARGO_PKG_VERSION")),
            wall_clock: self.started.elapsed().as_secs_f64(),
            command_line: self.common.command_line.clone(),
        };
        for (name, body) in files.iter().chain([&("manifest.txt", manifest.render())]) {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| io_error(&path, e))?;
        }
        Ok(())
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

/// `start:stop:step` with `step > 0` and `stop >= start`; both ends are
/// included when `(stop - start)` is a whole number of steps.
pub fn parse_range(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::ConfigParse(format!("range `{spec}` must be start:stop:step"));
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad())?;
    let [start, stop, step] = parts[..] else {
        return Err(bad());
    };
    if !(start.is_finite() && stop.is_finite() && step.is_finite()) || step <= 0.0 {
        return Err(bad());
    }
    if stop < start {
        return Err(Error::ConfigParse(format!("range `{spec}` runs backwards")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

/// A comma-separated list of numbers, or a `start:stop:step` range.
pub fn parse_list(spec: &str) -> Result<Vec<f64>> {
    if spec.contains(':') {
        return parse_range(spec);
    }
    spec.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::ConfigParse(format!("`{p}` is not a number")))
        })
        .collect()
}

/// Comma-separated mode names; `all` expands to every baseline.
pub fn parse_modes(spec: &str) -> Result<Vec<BaselineMode>> {
    if spec.trim() == "all" {
        return Ok(BaselineMode::BASELINES.to_vec());
    }
    spec.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse())
        .collect()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::ConfigParse(format!("alpha {alpha} outside (0, 1]")))
    }
}

/// Rate target from `--epsilon` or `--alpha` (fraction of the estimated
/// sum-rate ceiling).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Epsilon(f64),
    Alpha(f64),
}

impl Target {
    fn resolve(self, cfg: &ConfigFile) -> Result<f64> {
        match self {
            Target::Epsilon(e) if e.is_finite() && e >= 0.0 => Ok(e),
            Target::Epsilon(e) => Err(Error::ConfigParse(format!("epsilon {e} must be finite and >= 0"))),
            Target::Alpha(a) => {
                check_alpha(a)?;
                Ok(a * compute_r_max(&cfg.scenario, &cfg.solver)?)
            }
        }
    }
}

pub fn cmd_run(common: &Common, target: Target) -> Result<u8> {
    let session = Session::open(common)?;
    let cfg = &session.cfg;
    let epsilon = target.resolve(cfg)?;
    let out = run_algorithm1(&cfg.scenario, epsilon, default_init(&cfg.scenario), &cfg.solver)?;
    session.finish(&[
        ("solution.csv", report::solution_csv(&out.state)),
        ("trace.csv", report::trace_csv(&out.trace)),
    ])?;
    Ok(if out.converged { EXIT_OK } else { EXIT_NO_CONVERGENCE })
}

/// One row per (α, mode). Every mode runs at the same ε = α·R_max, with
/// R_max estimated for the proposed scheme.
pub fn cmd_pareto(common: &Common, alphas: &[f64], baselines: &[BaselineMode]) -> Result<u8> {
    let session = Session::open(common)?;
    let cfg = &session.cfg;
    alphas.iter().try_for_each(|&a| check_alpha(a))?;
    if alphas.is_empty() {
        return Err(Error::ConfigParse("no alpha values".into()));
    }
    let (s, opts) = (&cfg.scenario, &cfg.solver);
    let r_max = compute_r_max(s, opts)?;
    let mut points: Vec<ParetoPoint> = Vec::new();
    let mut modes = vec![BaselineMode::Proposed];
    modes.extend(baselines.iter().copied().filter(|m| *m != BaselineMode::Proposed));
    for mode in modes {
        points.extend(pareto_sweep_mode(s, alphas, mode, r_max, session.seed, opts)?);
    }
    session.finish(&[("pareto.csv", report::pareto_csv(&points))])?;
    Ok(all_infeasible_code(points.iter()))
}

fn all_infeasible_code<'a>(mut points: impl Iterator<Item = &'a ParetoPoint>) -> u8 {
    if points.any(|p| p.feasible) {
        EXIT_OK
    } else {
        EXIT_INFEASIBLE
    }
}

pub fn cmd_power_sweep(common: &Common, pth_dbm: &[f64], alpha: f64, baselines: &[BaselineMode]) -> Result<u8> {
    let session = Session::open(common)?;
    let cfg = &session.cfg;
    check_alpha(alpha)?;
    let mut modes = vec![BaselineMode::Proposed];
    modes.extend(baselines.iter().copied().filter(|m| *m != BaselineMode::Proposed));
    let mut rows = Vec::new();
    for mode in modes {
        rows.extend(power_sweep(&cfg.scenario, pth_dbm, alpha, mode, session.seed, &cfg.solver)?);
    }
    session.finish(&[("power_sweep.csv", report::power_sweep_csv(&rows))])?;
    Ok(all_infeasible_code(rows.iter().map(|r| &r.point)))
}

pub fn cmd_oracle_check(common: &Common, grids: &Path, target: Target) -> Result<u8> {
    let session = Session::open(common)?;
    let cfg = &session.cfg;
    let text = fs::read_to_string(grids).map_err(|e| io_error(grids, e))?;
    let grids = OracleGrids::from_toml(&text)?;
    let epsilon = target.resolve(cfg)?;
    let c = compare_with_pipeline(&cfg.scenario, &grids, epsilon, &cfg.solver)?;
    session.finish(&[("oracle_check.csv", report::oracle_csv(&c))])?;
    Ok(if c.within_band() { EXIT_OK } else { EXIT_BAND })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("25:35:1").unwrap().len(), 11);
        assert_eq!(parse_range("1:1:1").unwrap(), vec![1.0]);
        assert!(matches!(parse_range("35:25:1"), Err(Error::ConfigParse(_))));
        assert!(parse_range("1:2:0").is_err());
        assert!(parse_range("1:2").is_err());
        let a = parse_list("0.15:1.0:0.05").unwrap();
        assert_eq!(a.len(), 18);
        assert!((a[17] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lists_and_modes() {
        assert_eq!(parse_list("0.3, 0.6,0.9").unwrap(), vec![0.3, 0.6, 0.9]);
        assert!(parse_list("0.3,x").is_err());
        assert_eq!(parse_modes("all").unwrap().len(), 4);
        assert_eq!(parse_modes("no_irs,fixed_P").unwrap(), vec![BaselineMode::NoIrs, BaselineMode::FixedP]);
        assert!(parse_modes("nope").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Io("x".into())), 1);
        assert_eq!(exit_code(&Error::ConfigParse("x".into())), 1);
        assert_eq!(exit_code(&Error::Infeasible("x".into())), 2);
        assert_eq!(exit_code(&Error::NoConvergence { what: "x", iterations: 1 }), 3);
    }
}
