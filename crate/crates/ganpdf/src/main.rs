fn main() {
    std::process::exit(ganpdf::cli::run());
}
