fn main() {
    std::process::exit(dmpkit::run(std::env::args_os()));
}
