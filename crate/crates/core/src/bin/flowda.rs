fn main() -> std::process::ExitCode {
    flowda::cli::main()
}
