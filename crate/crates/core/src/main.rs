fn main() {
    std::process::exit(uqkit::cli::main());
}
