use clap::Parser;

fn main() {
    let cli = sinkdiv_cli::Cli::parse();
    if let Err(err) = sinkdiv_cli::run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
