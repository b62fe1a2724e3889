fn main() {
    std::process::exit(spectral_homotopy::cli::main_with_args(std::env::args_os()));
}
