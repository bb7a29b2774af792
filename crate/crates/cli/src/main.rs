use clap::Parser;

fn main() {
    let cli = morphcf_cli::commands::Cli::parse();
    if let Err(e) = morphcf_cli::commands::dispatch(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
