fn main() {
    std::process::exit(lieproj_cli::run(std::env::args_os()));
}
