//! The acceptance suite: every exit criterion at its pinned tolerance, one
//! pass/fail line per criterion.

use ce_core::acceptance::{render_table, run_all, AcceptanceOptions};

#[test]
fn acceptance_criteria() {
    let work_dir = tempfile::tempdir().expect("temp dir");
    let opts = AcceptanceOptions {
        base_n: 96,
        seed: 0xCE,
        tolerances: Default::default(),
        work_dir: work_dir.path().to_path_buf(),
    };
    let results = run_all(&opts);
    for r in &results {
        println!(
            "[{}] {:2}. {} — {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.id,
            r.name,
            r.details
        );
    }
    let failed: Vec<String> = results
        .iter()
        .filter(|r| !r.passed)
        .map(|r| format!("criterion {}: {} — {}", r.id, r.name, r.details))
        .collect();
    assert!(
        failed.is_empty(),
        "acceptance failures:\n{}\n\nfull table:\n{}",
        failed.join("\n"),
        render_table(&results)
    );
}
