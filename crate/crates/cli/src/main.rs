fn main() {
    std::process::exit(hetnet_cli::run(std::env::args_os()));
}
