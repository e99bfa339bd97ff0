use std::process::ExitCode;

fn main() -> ExitCode {
    haptic_attention::cli::main()
}
