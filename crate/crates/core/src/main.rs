fn main() {
    std::process::exit(cdbin::cli::run(std::env::args_os()));
}
