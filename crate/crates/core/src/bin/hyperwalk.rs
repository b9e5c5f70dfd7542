fn main() -> std::process::ExitCode {
    hyperwalk::cli::main_from_env()
}
