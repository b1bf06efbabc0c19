fn main() {
    std::process::exit(coarsen_gnn::cli::run(std::env::args_os()));
}
