fn main() {
    std::process::exit(topolab::harness::cli_dispatch(std::env::args()));
}
