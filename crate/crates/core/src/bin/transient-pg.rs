use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TRANSIENT_PG_LOG", "warn")).init();
    transient_pg::cli::main_with_args(std::env::args_os())
}
