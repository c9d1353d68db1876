fn main() -> std::process::ExitCode {
    voyagecast::cli::main()
}
