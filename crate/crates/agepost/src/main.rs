fn main() -> std::process::ExitCode {
    agepost::cli::main()
}
