use std::process::ExitCode;

use clap::Parser;
use lingam_id_cli::args::{BenchArgs, Cli, Command};
use lingam_id_cli::bench::{self, BenchProtocol, ProtocolId};
use lingam_id_cli::{commands, CliError, Result};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: &Command) -> Result<()> {
    match command {
        Command::Certify(args) => commands::emit(None, &commands::certify(args)?),
        Command::Generate(args) => commands::emit(args.out.as_deref(), &commands::generate(args)?),
        Command::Simulate(args) => commands::emit(args.out.as_deref(), &commands::simulate(args)?),
        Command::Estimate(args) => commands::emit(args.out.as_deref(), &commands::estimate_cmd(args)?),
        Command::Bench(args) => run_bench(args),
    }
}

fn run_bench(args: &BenchArgs) -> Result<()> {
    let mut protocol: BenchProtocol = match (&args.config, &args.protocol) {
        (Some(path), _) => commands::parse_config(path)?,
        (None, Some(name)) => BenchProtocol::new(
            ProtocolId::parse(name).ok_or_else(|| CliError::Input(format!("unknown protocol {name:?}")))?,
        ),
        (None, None) => return Err(CliError::Input("bench needs --config or --protocol".into())),
    };
    if let Some(t) = args.trials {
        protocol.trials = t;
    }
    if let Some(s) = args.seed {
        protocol.seed = s;
    }
    match &args.out {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            bench::run_to_csv(&protocol, args.workers, std::io::BufWriter::new(file))
        }
        None => bench::run_to_csv(&protocol, args.workers, std::io::stdout().lock()),
    }
}
