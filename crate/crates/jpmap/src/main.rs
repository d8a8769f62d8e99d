fn main() -> std::process::ExitCode {
    jpmap::cli::main_entry()
}
