use clap::Parser;

fn main() {
    advshift::cli::init_workers();
    let cli = advshift::cli::Cli::parse();
    if let Err(e) = advshift::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
