fn main() -> std::process::ExitCode {
    oceanvoice_gateway::cli::main()
}
