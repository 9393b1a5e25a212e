fn main() {
    let crate_dir = std::env::var("CARGO_MANIFEST_DIR").expect("manifest dir");
    let out = std::path::Path::new(&crate_dir).join("include/dcmatch.h");
    std::fs::create_dir_all(out.parent().unwrap()).expect("include dir");
    cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_language(cbindgen::Language::C)
        .with_include_guard("DCMATCH_H")
        .with_documentation(true)
        .with_cpp_compat(true)
        .generate()
        .expect("header generation")
        .write_to_file(out);
    println!("cargo:rerun-if-changed=src/lib.rs");
}
