fn main() {
    std::process::exit(lure_sysid::cli::main_with_args(std::env::args_os()));
}
