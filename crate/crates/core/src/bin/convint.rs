use clap::Parser;

fn main() {
    std::process::exit(convint::cli::main_with(convint::cli::Cli::parse()));
}
