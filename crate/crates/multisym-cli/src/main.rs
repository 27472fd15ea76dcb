mod config;
mod scenarios;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use multisym::numerics::NewtonOpts;
use multisym::par;
use serde_json::{json, Value};

use scenarios::{Ctx, Output};

#[derive(Parser, Debug)]
#[command(name = "multisym", version, about = "Discrete variational field theory scenarios")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Particle or rigid body boundary-value problem.
    Mech(Common),
    /// Explicit wave evolution with per-step residuals.
    Wave(Common),
    /// Lattice gauge solve with random boundary data.
    Lgt(Common),
    /// BF solve near a flat solution.
    Bf(Common),
    /// Pullback identities of the covariant Legendre map on random data.
    CanonicalCheck(Common),
    /// Continuum-limit tables and corrected actions.
    Converge(Common),
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Newton tolerance.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long)]
    threads: Option<usize>,
}

fn fail(code: u8, kind: &str, message: String) -> ExitCode {
    println!("{}", json!({ "status": "error", "kind": kind, "code": code, "message": message }));
    ExitCode::from(code)
}

fn write_all(dir: &Path, files: &[(String, String)]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, body) in files {
        std::fs::write(dir.join(name), body)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common) = match &cli.cmd {
        Cmd::Mech(c) => ("mech", c),
        Cmd::Wave(c) => ("wave", c),
        Cmd::Lgt(c) => ("lgt", c),
        Cmd::Bf(c) => ("bf", c),
        Cmd::CanonicalCheck(c) => ("canonical-check", c),
        Cmd::Converge(c) => ("converge", c),
    };
    if !(common.tol > 0.0) {
        return fail(2, "config", format!("--tol must be positive, got {}", common.tol));
    }
    if let Some(n) = common.threads {
        if n == 0 {
            return fail(2, "config", "--threads must be positive".into());
        }
        par::init_threads(n);
        par::set_sequential(n == 1);
    }
    let text = match std::fs::read_to_string(&common.config) {
        Ok(t) => t,
        Err(e) => return fail(2, "config", format!("{}: {e}", common.config.display())),
    };
    let ctx = Ctx { seed: common.seed, opts: NewtonOpts { tol: common.tol, ..Default::default() } };
    macro_rules! dispatch {
        ($run:path) => {
            match config::parse(&text) {
                Ok(cfg) => $run(&cfg, &ctx),
                Err(msg) => return fail(2, "config", msg),
            }
        };
    }
    let result: multisym::Result<Output> = match cli.cmd {
        Cmd::Mech(_) => dispatch!(scenarios::mech),
        Cmd::Wave(_) => dispatch!(scenarios::wave),
        Cmd::Lgt(_) => dispatch!(scenarios::lgt),
        Cmd::Bf(_) => dispatch!(scenarios::bf),
        Cmd::CanonicalCheck(_) => dispatch!(scenarios::canonical),
        Cmd::Converge(_) => dispatch!(scenarios::converge),
    };
    let out = match result {
        Ok(o) => o,
        Err(e) => {
            let code = scenarios::exit_code(&e);
            let kind = match code {
                2 => "config",
                3 => "solver",
                _ => "branch",
            };
            return fail(code as u8, kind, e.to_string());
        }
    };
    if let Err(e) = write_all(&common.out, &out.files) {
        return fail(1, "io", e.to_string());
    }
    let mut s = out.summary;
    s.insert("status".into(), json!("ok"));
    s.insert("subcommand".into(), json!(name));
    s.insert("seed".into(), json!(common.seed));
    s.insert("files".into(), Value::from(out.files.iter().map(|f| f.0.clone()).collect::<Vec<_>>()));
    println!("{}", Value::Object(s));
    ExitCode::SUCCESS
}
