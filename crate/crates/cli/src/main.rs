fn main() {
    std::process::exit(podtann_cli::run(std::env::args_os()));
}
