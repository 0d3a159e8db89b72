fn main() {
    std::process::exit(embdistill::harness::cli::main_with_args(std::env::args_os()));
}
