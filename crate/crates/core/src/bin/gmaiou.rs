fn main() {
    env_logger::init();
    std::process::exit(gmaiou_core::cli::run(std::env::args_os()));
}
