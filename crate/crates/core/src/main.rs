fn main() {
    std::process::exit(isscert::cli::run_command(std::env::args_os()));
}
