fn main() {
    std::process::exit(elastonet::run(std::env::args_os()));
}
