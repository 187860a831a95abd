fn main() {
    std::process::exit(fidelity_qmc::cli::main_with_args(std::env::args_os()));
}
