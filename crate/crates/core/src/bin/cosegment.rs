fn main() {
    std::process::exit(cosegment::cli::run(std::env::args_os()));
}
