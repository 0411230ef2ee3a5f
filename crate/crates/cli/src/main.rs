use clap::Parser;

fn main() {
    let cli = pdl_cli::Cli::parse();
    if let Err(e) = pdl_cli::run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(pdl_cli::exit_code(&e));
    }
}
