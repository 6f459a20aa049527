//! Regenerate the bundled toy dataset: `cargo run --example make_toy -- data/toy`.

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "data/toy".to_string());
    match citecomm::synthetic::write_toy(std::path::Path::new(&dir)) {
        Ok(cfg) => println!("wrote {}", cfg.display()),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
