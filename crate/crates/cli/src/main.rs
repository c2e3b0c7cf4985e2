use clap::Parser;

fn main() {
    let cli = csilab::Cli::parse();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    if let Err(e) = csilab::run(cli, &mut out) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
