fn main() {
    std::process::exit(hsi_track::cli::run(std::env::args_os()));
}
