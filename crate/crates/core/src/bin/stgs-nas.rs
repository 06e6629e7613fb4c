fn main() {
    std::process::exit(stgs_nas::commands::run(std::env::args_os()));
}
