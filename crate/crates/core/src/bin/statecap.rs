fn main() {
    std::process::exit(statecap::cli::main_from_env());
}
