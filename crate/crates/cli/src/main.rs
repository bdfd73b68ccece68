fn main() {
    std::process::exit(jumpflow_cli::run(std::env::args_os()));
}
