fn main() {
    std::process::exit(textdrive::cli::run(std::env::args()));
}
