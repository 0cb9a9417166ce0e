//! `lincat`: parse, normalize, render, evaluate and compare morphisms of
//! the free classical linear category.
//!
//! Exit codes: 0 success (or "equivalent"), 1 "distinct" or a failed
//! self-test, 2 inconclusive (a budget ran out), 3 input error.

mod commands;
mod selftest;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "lincat", version, about = "Normalization and equality of linear-category morphisms")]
pub struct Cli {
    #[command(flatten)]
    pub config: Config,
    #[command(subcommand)]
    pub command: Command,
}

/// Settings shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct Config {
    /// Declared atoms; terms may only use these. Defaults to the atoms the
    /// input mentions.
    #[arg(long, global = true, value_delimiter = ',')]
    pub atoms: Option<Vec<String>>,
    /// Number of labels interpreting each atom in the matrix model.
    #[arg(long, global = true, default_value_t = 2)]
    pub interp_size: usize,
    /// Multiset truncation cap of the matrix model.
    #[arg(long, global = true, default_value_t = 3)]
    pub degree: usize,
    /// Maximum number of rewriting steps.
    #[arg(long, global = true, default_value_t = 10_000)]
    pub fuel: usize,
    /// Maximum number of congruence variants explored per search.
    #[arg(long, global = true, default_value_t = 64)]
    pub cong_budget: usize,
    /// Prime for echo instances (default: the smallest admissible one).
    #[arg(long, global = true)]
    pub p: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Text,
    Json,
    Dot,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Via {
    Pi,
    Matrix,
    Both,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse a term file and print it back.
    Parse { file: PathBuf },
    /// Typecheck a term file and print its judgement.
    Typecheck { file: PathBuf },
    /// Normalize a term by rewriting modulo congruence.
    Normalize {
        file: PathBuf,
        /// Print the rewriting trace.
        #[arg(long)]
        trace: bool,
    },
    /// Build and normalize the graph of a term.
    Graph {
        file: PathBuf,
        #[arg(long, conflicts_with = "json")]
        dot: bool,
        #[arg(long)]
        json: bool,
    },
    /// One coefficient M[α; β] of a term.
    Coeff {
        file: PathBuf,
        alpha: String,
        beta: String,
        /// Enumeration process on the graph, the matrix model, or both.
        #[arg(long, value_enum, default_value_t = Via::Both)]
        via: Via,
    },
    /// The p-echo instance of a term's normal graph and its echo conditions.
    Pecho { file: PathBuf },
    /// Decide whether two terms denote the same morphism.
    Decide {
        left: PathBuf,
        right: PathBuf,
        /// Decide through an echo instance instead of comparing graphs.
        #[arg(long)]
        semantic: bool,
    },
    /// Run the invariant suite on a random corpus.
    Selftest {
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Corrupt one oracle so that the suite must fail.
        #[arg(long)]
        inject_failure: bool,
    },
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Failure { code: 3, message: message.into() }
    }
    pub fn inconclusive(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }
}

impl Config {
    fn validate(&self) -> Result<(), Failure> {
        if let Some(a) = &self.atoms {
            if a.is_empty() || a.iter().any(|x| x.is_empty()) {
                return Err(Failure::input("--atoms needs at least one nonempty atom name"));
            }
        }
        for (name, v) in [("--interp-size", self.interp_size), ("--fuel", self.fuel), ("--cong-budget", self.cong_budget)] {
            if v == 0 {
                return Err(Failure::input(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = cli.config.validate().and_then(|_| commands::run(&cli.config, &cli.command));
    match result {
        Ok(out) => {
            print!("{}", out.text);
            ExitCode::from(out.code)
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
