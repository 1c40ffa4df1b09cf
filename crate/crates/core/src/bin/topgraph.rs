fn main() {
    std::process::exit(topgraph::cli::run(std::env::args_os()));
}
