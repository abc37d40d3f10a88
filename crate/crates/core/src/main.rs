fn main() {
    std::process::exit(coxsmc::cli::main());
}
