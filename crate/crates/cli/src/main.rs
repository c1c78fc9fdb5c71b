fn main() {
    std::process::exit(tfnorm_cli::run(std::env::args_os()));
}
