fn main() {
    std::process::exit(strobo::cli::main_with_args(std::env::args_os()));
}
