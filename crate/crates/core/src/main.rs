fn main() {
    std::process::exit(dredit::cli::run());
}
