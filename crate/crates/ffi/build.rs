use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = env::var("CARGO_MANIFEST_DIR").unwrap();
    let out = PathBuf::from(&crate_dir).join("include").join("chainlab.h");

    let config = cbindgen::Config {
        language: cbindgen::Language::C,
        include_guard: Some("CHAINLAB_H".to_string()),
        cpp_compat: true,
        documentation: true,
        ..Default::default()
    };

    println!("cargo:rerun-if-changed=src/lib.rs");
    cbindgen::Builder::new()
        .with_crate(crate_dir)
        .with_config(config)
        .generate()
        .expect("cbindgen failed")
        .write_to_file(out);
}
