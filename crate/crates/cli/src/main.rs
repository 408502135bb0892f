use std::process::ExitCode;

fn main() -> ExitCode {
    oscnet::run(std::env::args_os())
}
