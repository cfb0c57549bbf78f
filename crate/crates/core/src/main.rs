fn main() {
    std::process::exit(sparsecond::cli::main_with_args(std::env::args_os()));
}
