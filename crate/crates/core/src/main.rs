fn main() {
    std::process::exit(connectgraph::cli::run(std::env::args_os()));
}
