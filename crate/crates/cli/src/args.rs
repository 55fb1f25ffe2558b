use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "tanlap", version, about = "Residuals, flatness and minimality checks for vector maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Gallery parameter `key=value`; repeatable.
    #[arg(long = "param", global = true, value_name = "KEY=VALUE")]
    pub params: Vec<String>,
    /// Relative rank tolerance (multiplies the largest singular value).
    #[arg(long, global = true, default_value_t = 1e-9)]
    pub rel_tol: f64,
    /// Absolute rank tolerance.
    #[arg(long, global = true, default_value_t = 1e-12)]
    pub abs_tol: f64,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Report path.
    #[arg(long, global = true, default_value = "report.json")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the built-in maps.
    Gallery {
        #[arg(long)]
        list: bool,
    },
    /// Pointwise operator residuals over a lattice.
    Residual {
        /// `gallery:<id>[:<sub>...]` or `csv:<path>`.
        #[arg(long)]
        map: String,
        #[arg(long, value_enum)]
        op: Op,
        /// Exponent for `p-laplace`.
        #[arg(long)]
        p: Option<f64>,
        /// `a,bxc,d`.
        #[arg(long = "box", allow_hyphen_values = true)]
        bx: Option<String>,
        /// Samples per axis.
        #[arg(long, default_value_t = 41)]
        n: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Rank segmentation and affine fits of the image.
    Flatness {
        #[arg(long)]
        map: String,
        #[arg(long = "box", allow_hyphen_values = true)]
        bx: Option<String>,
        #[arg(long, default_value_t = 41)]
        n: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Energy under seeded normal perturbations.
    Variational {
        #[arg(long)]
        map: String,
        /// Subdomain `a,bxc,d`; defaults to the middle half of the box.
        #[arg(long, allow_hyphen_values = true)]
        sub: Option<String>,
        #[arg(long, default_value_t = 21)]
        n: usize,
        /// `2`, `4`, ..., or `inf`.
        #[arg(long, default_value = "2")]
        p: String,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated epsilon grid.
        #[arg(long, allow_hyphen_values = true, default_value = "0.2,-0.2,0.1,-0.1,0.05,-0.05")]
        eps: String,
    },
    /// Separated-form coefficients, factor identities and span inclusion.
    Separated {
        #[arg(long)]
        map: String,
        /// `x0,y0`; defaults to the centre of the rectangle.
        #[arg(long, allow_hyphen_values = true)]
        base: Option<String>,
        /// `x,y` for the identity residuals.
        #[arg(long, allow_hyphen_values = true)]
        query: Option<String>,
        #[arg(long, default_value_t = 32)]
        m: usize,
        #[arg(long, default_value_t = 50)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Op {
    Tangential,
    Tension,
    Laplacian,
    PLaplace,
    InfLaplace,
    AField,
}
