fn main() {
    std::process::exit(bvs::cli::run());
}
