fn main() {
    std::process::exit(knapcount::cli::run());
}
