fn main() {
    std::process::exit(steinshrink_cli::run(std::env::args_os()));
}
