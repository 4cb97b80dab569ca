fn main() {
    std::process::exit(wavg_core::cli::main_with_args(std::env::args_os()));
}
