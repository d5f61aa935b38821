fn main() {
    std::process::exit(lidonor_cli::run(std::env::args_os()));
}
