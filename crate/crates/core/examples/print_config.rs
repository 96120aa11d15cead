//! Prints the default run configuration as TOML.

fn main() {
    let cfg = duplex_av::app::RunConfig::default();
    println!("# config hash {}", cfg.hash());
    print!("{}", cfg.to_toml());
}
