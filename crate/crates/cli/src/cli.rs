//! Argument parsing and the process entry point.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::commands;
use crate::config::{CliError, Command, RunConfig, SurfaceArg};

pub const THREADS_ENV: &str = "CHEBMAP_THREADS";

#[derive(Debug, Parser)]
#[command(name = "chebmap", version, about = "Map projections, optimal conformal maps and Chebyshev nets")]
pub struct Cli {
    /// Seed for sampled checks and sampled output.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SurfaceOpt {
    Plane,
    Sphere,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Project a region and report its distortion.
    Project {
        region: PathBuf,
        /// Projection, `name[:key=value,...]` with angles in degrees.
        #[arg(long = "proj", default_value = "mercator")]
        proj: String,
        /// Graticule spacing in degrees.
        #[arg(long, default_value_t = 10.0)]
        graticule: f64,
        #[arg(long, default_value_t = 128)]
        grid: usize,
        #[arg(long)]
        svg: Option<PathBuf>,
        /// CSV of local distortion at the grid cell centers.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Use this many random interior points for the CSV instead.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Compute the optimal conformal map of a region.
    Optimize {
        region: PathBuf,
        #[arg(long, default_value_t = 128)]
        grid: usize,
        /// Map file (CHEBMAP1).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long, default_value_t = 100_000)]
        max_iter: usize,
        /// Relative residual tolerance of the Dirichlet solve.
        #[arg(long, default_value_t = 1e-13)]
        tol: f64,
    },
    /// Build a Chebyshev net from two geodesic seeds.
    Net {
        #[arg(long, value_enum, default_value = "sphere")]
        surface: SurfaceOpt,
        /// Seed angle in degrees.
        #[arg(long, default_value_t = 90.0)]
        phi0: f64,
        /// Edge length.
        #[arg(long, default_value_t = 0.05)]
        step: f64,
        /// Seed length per quadrant [default: a quarter great circle on the
        /// sphere, 1 on the plane].
        #[arg(long)]
        extent: Option<f64>,
        /// Edge lengths `a,c` along i and j, overriding --step.
        #[arg(long, value_parser = parse_rect)]
        rect: Option<(f64, f64)>,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        /// CSV of vertices.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Tabulate the scale ratio of several projections of one region.
    Compare {
        region: PathBuf,
        /// Projection specs, plus the keywords `conic-fit` and `optimized`.
        #[arg(long, num_args = 1.., required = true)]
        projections: Vec<String>,
        #[arg(long, default_value_t = 128)]
        grid: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value_t = 100_000)]
        max_iter: usize,
        #[arg(long, default_value_t = 1e-13)]
        tol: f64,
    },
}

fn parse_rect(s: &str) -> Result<(f64, f64), String> {
    let (a, c) = s.split_once(',').ok_or("expected a,c")?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok((num(a)?, num(c)?))
}

impl Cli {
    pub fn into_config(self) -> RunConfig {
        let mut cfg = RunConfig {
            command: Command::Optimize { region: PathBuf::new() },
            grid: 0,
            tol: 1e-13,
            max_iter: 100_000,
            seed: self.seed,
            out: None,
            svg: None,
            csv: None,
        };
        cfg.command = match self.cmd {
            Cmd::Project {
                region,
                proj,
                graticule,
                grid,
                svg,
                csv,
                samples,
            } => {
                (cfg.grid, cfg.svg, cfg.csv) = (grid, svg, csv);
                Command::Project {
                    region,
                    projection: proj,
                    graticule,
                    samples,
                }
            }
            Cmd::Optimize {
                region,
                grid,
                out,
                svg,
                max_iter,
                tol,
            } => {
                (cfg.grid, cfg.out, cfg.svg, cfg.max_iter, cfg.tol) = (grid, out, svg, max_iter, tol);
                Command::Optimize { region }
            }
            Cmd::Net {
                surface,
                phi0,
                step,
                extent,
                rect,
                radius,
                out,
                svg,
            } => {
                (cfg.out, cfg.svg) = (out, svg);
                let surface = match surface {
                    SurfaceOpt::Plane => SurfaceArg::Plane,
                    SurfaceOpt::Sphere => SurfaceArg::Sphere,
                };
                let extent = extent.unwrap_or(match surface {
                    SurfaceArg::Plane => 1.0,
                    SurfaceArg::Sphere => FRAC_PI_2 * radius,
                });
                Command::Net {
                    surface,
                    radius,
                    phi0,
                    step,
                    extent,
                    rect,
                }
            }
            Cmd::Compare {
                region,
                projections,
                grid,
                csv,
                max_iter,
                tol,
            } => {
                (cfg.grid, cfg.csv, cfg.max_iter, cfg.tol) = (grid, csv, max_iter, tol);
                let projections = projections
                    .iter()
                    .flat_map(|p| p.split(';'))
                    .map(|p| p.trim().to_string())
                    .filter(|p| !p.is_empty())
                    .collect();
                Command::Compare { region, projections }
            }
        };
        cfg
    }
}

/// Caps the global thread pool from `CHEBMAP_THREADS`, if set.
pub fn configure_threads(value: Option<&str>) -> Result<(), CliError> {
    let Some(v) = value else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::BadInput(format!("{THREADS_ENV}={v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::BadInput(format!("{THREADS_ENV}: {e}")))
}

/// Runs the command line and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let threads = std::env::var(THREADS_ENV).ok();
    let result = configure_threads(threads.as_deref()).and_then(|()| commands::run(&cli.into_config()));
    match result {
        Ok(out) => {
            for w in &out.warnings {
                eprintln!("{w}");
            }
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(out.report.as_bytes());
            let _ = stdout.flush();
            0
        }
        Err(e) => {
            eprintln!("chebmap: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rect_and_threads() {
        assert_eq!(parse_rect("0.1, 0.2"), Ok((0.1, 0.2)));
        assert!(parse_rect("0.1").is_err());
        assert_eq!(configure_threads(Some("zero")).unwrap_err().exit_code(), 2);
        assert_eq!(configure_threads(Some("0")).unwrap_err().exit_code(), 2);
        assert!(configure_threads(None).is_ok());
    }

    #[test]
    fn compare_list_splits() {
        let cli = Cli::try_parse_from(["chebmap", "compare", "r.txt", "--projections", "mercator;optimized", "conic-fit"]).unwrap();
        match cli.into_config().command {
            Command::Compare { projections, .. } => assert_eq!(projections, ["mercator", "optimized", "conic-fit"]),
            c => panic!("{c:?}"),
        }
    }

    #[test]
    fn net_defaults() {
        let cfg = Cli::try_parse_from(["chebmap", "net"]).unwrap().into_config();
        assert_eq!(cfg.net_half_width(), 31);
        let cfg = Cli::try_parse_from(["chebmap", "net", "--surface", "plane", "--step", "0.1"]).unwrap().into_config();
        assert_eq!(cfg.net_half_width(), 10);
    }
}
