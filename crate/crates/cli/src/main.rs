fn main() {
    std::process::exit(gxlab_cli::dispatch(std::env::args()));
}
