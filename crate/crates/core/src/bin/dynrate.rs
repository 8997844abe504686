fn main() {
    std::process::exit(dynrate::cli::run());
}
