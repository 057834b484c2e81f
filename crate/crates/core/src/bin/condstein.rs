fn main() {
    std::process::exit(condstein::cli::main_from_env());
}
