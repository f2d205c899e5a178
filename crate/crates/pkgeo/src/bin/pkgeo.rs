use std::process::ExitCode;

fn main() -> ExitCode {
    pkgeo::cli::run_main()
}
