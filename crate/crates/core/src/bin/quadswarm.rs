fn main() -> std::process::ExitCode {
    quadswarm::cli::main()
}
