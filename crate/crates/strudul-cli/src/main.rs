fn main() {
    eprintln!("strudul: not yet implemented");
    std::process::exit(2);
}
