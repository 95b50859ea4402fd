fn main() {
    std::process::exit(fz_core::cli::main_with_args(std::env::args_os()));
}
