fn main() {
    std::process::exit(tcn_nids::cli::main_with_args(std::env::args_os()));
}
