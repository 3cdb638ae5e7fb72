fn main() {
    std::process::exit(tsnkit::cli::run(std::env::args_os()));
}
