fn main() {
    std::process::exit(cmkv::cli::run(std::env::args_os()));
}
