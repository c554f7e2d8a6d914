fn main() {
    std::process::exit(gce::harness::cli_main(std::env::args_os()));
}
