fn main() {
    std::process::exit(bsdp_core::harness::cli_main(std::env::args_os()));
}
