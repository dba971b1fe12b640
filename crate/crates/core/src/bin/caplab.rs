fn main() {
    std::process::exit(caplab::cli::main());
}
