fn main() {
    std::process::exit(semcast_cli::run());
}
