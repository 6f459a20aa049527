use std::path::Path;

use citecomm::synthetic::write_toy;

#[test]
fn bundled_toy_matches_generator() {
    let bundled = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/toy");
    let dir = tempfile::tempdir().unwrap();
    write_toy(dir.path()).unwrap();
    for name in ["edges_2019.tsv", "edges_2020.tsv", "metadata.jsonl", "toy.toml"] {
        let fresh = std::fs::read(dir.path().join(name)).unwrap();
        let kept = std::fs::read(bundled.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(
            fresh == kept,
            "{name} differs from the generator; rerun the make_toy example"
        );
    }
}
