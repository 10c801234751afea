use clap::Parser;

fn main() {
    let cli = mcrl_cli::Cli::parse();
    if let Err(e) = mcrl_cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
