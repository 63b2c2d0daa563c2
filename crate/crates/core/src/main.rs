fn main() -> std::process::ExitCode {
    stance_core::cli::main_with_args(std::env::args_os())
}
