fn main() {
    std::process::exit(kfp_cli::run(std::env::args_os()));
}
