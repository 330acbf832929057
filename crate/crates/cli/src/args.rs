use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pwavg::averaging::AveragingConfig;
use pwavg::flow::IntegratorConfig;
use pwavg::shooting::ShootingConfig;
use pwavg::variational::VariationalMode;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "pwavg", version, about = "Averaging analysis of periodic piecewise differential systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a model file for schema, expression and zone errors.
    Validate {
        model: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Integrate one orbit and write trajectory and event tables.
    Integrate {
        model: PathBuf,
        /// Initial state, comma separated.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        z: Vec<f64>,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        eps: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        t0: f64,
        /// Final time; defaults to `t0` plus one period.
        #[arg(long, allow_negative_numbers = true)]
        tf: Option<f64>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Sample the averaged function and the hypotheses on the manifold grid.
    Avgfn {
        model: PathBuf,
        #[arg(long, default_value_t = 50)]
        grid: usize,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Locate zeros of the averaged function and certify them.
    Find {
        model: PathBuf,
        #[arg(long, default_value_t = 40)]
        grid: usize,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Continue a candidate into periodic orbits of the full system.
    Verify {
        model: PathBuf,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "1e-1,1e-2,1e-3,1e-4")]
        eps_list: Vec<f64>,
        /// Starting point on the manifold; defaults to the located zero.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        z_a: Option<Vec<f64>>,
        #[arg(long, default_value_t = 40)]
        grid: usize,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Write a built-in model document.
    Builtin {
        name: BuiltinName,
        /// 24 numbers, or name=value pairs; unspecified entries keep the
        /// default instance.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        coeffs: Option<Vec<String>>,
        /// Radius range of the manifold of the polar model.
        #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0.05, 1.0])]
        r_range: Vec<f64>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BuiltinName {
    /// Cartesian three-dimensional form.
    Prop1,
    /// Angle-as-time form with its one-dimensional manifold.
    Prop1Polar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    Both,
}

impl OutputFormat {
    pub fn csv(self) -> bool {
        matches!(self, OutputFormat::Csv | OutputFormat::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, OutputFormat::Json | OutputFormat::Both)
    }
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Both)]
    pub format: OutputFormat,
    /// Seed for random probe sampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub probes: usize,
    #[arg(long)]
    pub rtol: Option<f64>,
    #[arg(long)]
    pub atol: Option<f64>,
    #[arg(long)]
    pub tol_event: Option<f64>,
    #[arg(long)]
    pub tol_transversal: Option<f64>,
    #[arg(long)]
    pub max_events: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub probe_step: Option<f64>,
    #[arg(long)]
    pub hypothesis_tightening: Option<f64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub periodicity_tol: Option<f64>,
    #[arg(long)]
    pub h2_tol: Option<f64>,
    #[arg(long)]
    pub det_tol: Option<f64>,
    #[arg(long)]
    pub h3_tol: Option<f64>,
    #[arg(long)]
    pub zero_tol: Option<f64>,
    #[arg(long)]
    pub margin_tol: Option<f64>,
    #[arg(long)]
    pub dedup_radius: Option<f64>,
    #[arg(long)]
    pub shoot_rtol: Option<f64>,
    #[arg(long)]
    pub shoot_atol: Option<f64>,
    #[arg(long)]
    pub newton_tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub fd_step: Option<f64>,
    #[arg(long)]
    pub verify_factor: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Plain,
    Saltation,
}

/// Effective configuration of a run, echoed into every report.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    pub format: OutputFormat,
    pub seed: u64,
    pub probes: usize,
    pub threads: Option<usize>,
    pub grid: Option<usize>,
    pub eps_list: Option<Vec<f64>>,
    pub integrator: IntegratorConfig,
    pub averaging: AveragingConfig,
    pub shooting: ShootingConfig,
}

fn set<T: Copy>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl RunConfig {
    pub fn from_args(c: &CommonArgs, threads: Option<usize>) -> RunConfig {
        let mut integrator = IntegratorConfig::default();
        set(&mut integrator.rtol, c.rtol);
        set(&mut integrator.atol, c.atol);
        set(&mut integrator.tol_event, c.tol_event);
        set(&mut integrator.tol_transversal, c.tol_transversal);
        set(&mut integrator.max_events, c.max_events);
        set(&mut integrator.max_steps, c.max_steps);
        set(&mut integrator.probe_step, c.probe_step);

        let mut averaging = AveragingConfig {
            integrator,
            ..AveragingConfig::default()
        };
        set(&mut averaging.hypothesis_tightening, c.hypothesis_tightening);
        if let Some(m) = c.mode {
            averaging.mode = match m {
                ModeArg::Plain => VariationalMode::Plain,
                ModeArg::Saltation => VariationalMode::Saltation,
            };
        }
        set(&mut averaging.periodicity_tol, c.periodicity_tol);
        set(&mut averaging.h2_tol, c.h2_tol);
        set(&mut averaging.det_tol, c.det_tol);
        set(&mut averaging.h3_tol, c.h3_tol);
        set(&mut averaging.zero_tol, c.zero_tol);
        set(&mut averaging.margin_tol, c.margin_tol);
        set(&mut averaging.dedup_radius, c.dedup_radius);

        let mut shooting = ShootingConfig::default();
        shooting.integrator = IntegratorConfig {
            rtol: shooting.integrator.rtol,
            atol: shooting.integrator.atol,
            ..integrator
        };
        set(&mut shooting.integrator.rtol, c.shoot_rtol);
        set(&mut shooting.integrator.atol, c.shoot_atol);
        set(&mut shooting.newton_tol, c.newton_tol);
        set(&mut shooting.max_iter, c.max_iter);
        set(&mut shooting.fd_step, c.fd_step);
        set(&mut shooting.verify_factor, c.verify_factor);

        RunConfig {
            out_dir: c.out_dir.clone(),
            format: c.format,
            seed: c.seed,
            probes: c.probes,
            threads,
            grid: None,
            eps_list: None,
            integrator,
            averaging,
            shooting,
        }
    }
}
