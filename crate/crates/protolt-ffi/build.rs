fn main() {
    let crate_dir = std::env::var("CARGO_MANIFEST_DIR").unwrap();

    let result = cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(cbindgen::Config {
            language: cbindgen::Language::C,
            cpp_compat: true,
            include_guard: Some("PROTOLT_H".into()),
            include_version: false,
            documentation: true,
            ..Default::default()
        })
        .generate()
        .map(|data| {
            data.write_to_file(format!("{crate_dir}/include/protolt.h"));
        });

    if result.is_err() {
        // Header generation failures should fail the build loudly rather
        // than ship a stale header.
        panic!("cbindgen failed: {result:?}");
    }
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=build.rs");
}
