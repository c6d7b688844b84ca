fn main() {
    std::process::exit(tailbound::cli::main());
}
