fn main() {
    std::process::exit(sqa_core::cli::main_with_args(std::env::args_os()));
}
