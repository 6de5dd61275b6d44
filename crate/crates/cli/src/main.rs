use clap::Parser;
use retarget_cli::cli::{exit_code, run, Cli, Command};
use retarget_cli::service::{serve, ServiceConfig};

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Some(Command::Serve(args)) => tokio::runtime::Runtime::new()
            .map_err(anyhow::Error::from)
            .and_then(|rt| rt.block_on(serve(args.bind, ServiceConfig { workers: args.workers, spill_dir: args.spill_dir }))),
        None => run(&cli.run),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code(&err));
    }
}
