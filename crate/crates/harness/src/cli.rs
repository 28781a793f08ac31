//! Command-line front end.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::{self, Outcome};
use crate::config::Config;
use crate::error::{HarnessError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "slowfast",
    version,
    about = "Slow-fast stochastic wave/heat system: simulation and averaging studies"
)]
pub struct Cli {
    /// Experiment configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the `seed` key of the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true, env = "SPDE_THREADS", default_value_t = 0)]
    pub threads: usize,
    /// Output directory for CSV files.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// One trajectory with energy-identity residuals.
    Simulate {
        /// Integrate the averaged equation instead of the full system.
        #[arg(long)]
        averaged: bool,
    },
    /// Mode-wise averaged-drift estimate at `avg_drift.x`.
    AvgDrift,
    /// Synchronous-coupling contraction of the frozen equation.
    Mixing,
    /// Strong-error study of the full system against the averaged equation.
    RateStudy,
    /// Probe the declared coefficient constants.
    Validate,
    /// Slope and bound checks of the configured fixture.
    LemmaChecks,
}

impl Cli {
    pub fn run(&self) -> Result<Outcome> {
        let cfg = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        let seed = self.seed.unwrap_or(cfg.seed);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| HarnessError::config("threads", e.to_string()))?;
        let out = &self.out;
        pool.install(|| match self.command {
            Command::Simulate { averaged } => commands::simulate(&cfg, seed, out, averaged),
            Command::AvgDrift => commands::avg_drift(&cfg, seed, out),
            Command::Mixing => commands::mixing(&cfg, seed, out),
            Command::RateStudy => commands::rate_study(&cfg, seed, out),
            Command::Validate => commands::validate(&cfg, seed, out),
            Command::LemmaChecks => commands::lemma_checks(&cfg, seed, out),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parses_global_flags_after_subcommand() {
        let cli = Cli::try_parse_from(["slowfast", "simulate", "--averaged", "--seed", "7", "--threads", "2"]).unwrap();
        assert_eq!(cli.command, Command::Simulate { averaged: true });
        assert_eq!(cli.seed, Some(7));
        assert_eq!(cli.threads, 2);
        assert!(Cli::try_parse_from(["slowfast", "rate-study", "--bogus"]).is_err());
    }
}
