use std::process::Command;

fn main() {
    // Embed a short git revision as the build id when available.
    let rev = Command::new("git")
        .args(["rev-parse", "--short=12", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string());
    if let Some(rev) = rev {
        println!("cargo:rustc-env=HCG_BUILD_ID={rev}");
    }
    println!("cargo:rerun-if-changed=build.rs");
}
