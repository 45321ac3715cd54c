fn main() {
    std::process::exit(block_iba_harness::cli::main_with_args(std::env::args_os()));
}
