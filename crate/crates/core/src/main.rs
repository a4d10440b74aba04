fn main() {
    std::process::exit(vvnet::cli::run(std::env::args_os()));
}
