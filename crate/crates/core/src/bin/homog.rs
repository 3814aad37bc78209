fn main() -> std::process::ExitCode {
    homog::cli::main()
}
