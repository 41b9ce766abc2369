//! `covclust`: simulate grouped curves, estimate covariances, cluster them
//! under the Wasserstein-Procrustes metric, scan K, permutation-test and
//! export distance/MDS reports.

mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// Failure classes and their exit codes.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, unreadable or malformed input: exit code 2.
    Input(anyhow::Error),
    /// Numerical or solver failure: exit code 3.
    Solver(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Solver(_) => 3,
        }
    }
}

impl From<covclust::Error> for Failure {
    fn from(e: covclust::Error) -> Self {
        use covclust::Error as E;
        match e {
            E::NotPsd { .. } | E::DegenerateDistances(_) => Failure::Solver(e.into()),
            _ => Failure::Input(e.into()),
        }
    }
}

pub type CmdResult = Result<(), Failure>;

fn input_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Input(e.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not configure {n} threads: {e}");
        }
    }
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Cov(a) => commands::cov(a),
        Command::Cluster(a) => commands::cluster(a),
        Command::Tasw(a) => commands::tasw(a),
        Command::Permtest(a) => commands::permtest(a),
        Command::Mds(a) => commands::mds(a),
        Command::Dist(a) => commands::dist(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Input(e) | Failure::Solver(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}
