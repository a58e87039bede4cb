fn main() {
    std::process::exit(gridcrew::cli::run(std::env::args_os()));
}
