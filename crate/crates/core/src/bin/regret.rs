fn main() {
    std::process::exit(regret_core::cli::main_with_args(std::env::args_os()));
}
