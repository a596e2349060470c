fn main() {
    ote_mtl::cli::init_logging();
    std::process::exit(ote_mtl::cli::run(std::env::args_os()));
}
