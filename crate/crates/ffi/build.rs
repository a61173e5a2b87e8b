fn main() {
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    let dir = std::env::var("CARGO_MANIFEST_DIR").expect("manifest dir");
    cbindgen::generate(&dir)
        .expect("cbindgen failed")
        .write_to_file(format!("{dir}/include/semamerge.h"));
}
