fn main() {
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    #[cfg(feature = "generate-header")]
    {
        let crate_dir = std::env::var("CARGO_MANIFEST_DIR").unwrap();
        // Best effort: on any failure the committed include/nnfact.h stays
        // in place, so consumers always have a header.
        match cbindgen::generate(&crate_dir) {
            Ok(bindings) => {
                bindings.write_to_file(format!("{crate_dir}/include/nnfact.h"));
            }
            Err(e) => println!("cargo:warning=header generation skipped: {e}"),
        }
    }
}
