use lms_anc::cli;

fn main() {
    std::process::exit(cli::run_cli(std::env::args_os()));
}
