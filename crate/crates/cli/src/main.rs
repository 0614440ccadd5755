use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ddtwin_core::commands::{
    cmd_elaborate, cmd_report, cmd_scenarios, cmd_solve, cmd_validate, CmdOutput, Exit, Overrides,
};
use ddtwin_core::sched::Mode;

#[derive(Parser)]
#[command(
    name = "ddtwin",
    version,
    about = "Declarative digital twin compiler and scenario generator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and statically check every input.
    Validate(Common),
    /// Write the elaborated task graph.
    Elaborate(Common),
    /// Compute the best-case schedule.
    Solve(Common),
    /// Generate and rank failure scenarios.
    Scenarios(Common),
    /// Merge scenario tables found in the output directory.
    Report(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(["exact", "heuristic"]))]
    mode: Option<String>,
}

fn write_atomic(dir: &Path, name: &str, body: &[u8]) -> std::io::Result<()> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(body)?;
    tmp.as_file().sync_all()?;
    tmp.persist(dir.join(name)).map_err(|e| e.error)?;
    Ok(())
}

fn emit(out: &CmdOutput) -> Exit {
    print!("{}", out.stdout);
    eprint!("{}", out.stderr);
    if out.files.is_empty() {
        return out.exit;
    }
    if let Err(e) = fs::create_dir_all(&out.out_dir) {
        eprintln!("error: {}: {e}", out.out_dir.display());
        return Exit::Internal;
    }
    for (name, body) in &out.files {
        if let Err(e) = write_atomic(&out.out_dir, name, body) {
            eprintln!("error: {}: {e}", out.out_dir.join(name).display());
            return Exit::Internal;
        }
    }
    out.exit
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // usage errors are input errors; help and version are not
            return ExitCode::from(if e.use_stderr() { Exit::Invalid as u8 } else { 0 });
        }
    };
    let (run, common): (fn(&Path, &Overrides) -> CmdOutput, Common) = match cli.command {
        Command::Validate(c) => (cmd_validate, c),
        Command::Elaborate(c) => (cmd_elaborate, c),
        Command::Solve(c) => (cmd_solve, c),
        Command::Scenarios(c) => (cmd_scenarios, c),
        Command::Report(c) => (cmd_report, c),
    };
    let ov = Overrides {
        out: common.out,
        seed: common.seed,
        mode: common.mode.map(|m| m.parse::<Mode>().expect("checked by clap")),
    };
    let out = match std::panic::catch_unwind(|| run(&common.manifest, &ov)) {
        Ok(o) => o,
        Err(_) => return ExitCode::from(Exit::Internal as u8),
    };
    ExitCode::from(emit(&out) as u8)
}
