//! The embedded oracle suite, plus the same suite with a corrupted
//! derivative to show that it is caught.
//!
//! cargo run --release --example selfcheck

use millgnn::selfcheck::run_selfcheck;

fn main() {
    let clean = run_selfcheck(false);
    print!("{}", clean.table());
    println!("clean: {}\n", if clean.passed() { "pass" } else { "FAIL" });
    let faulty = run_selfcheck(true);
    print!("{}", faulty.table());
    println!("with injected fault: {}", if faulty.passed() { "pass (unexpected)" } else { "fails as expected" });
}
