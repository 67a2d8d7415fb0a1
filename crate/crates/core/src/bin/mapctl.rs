fn main() {
    std::process::exit(map_pursuit::cli::run(std::env::args_os()));
}
