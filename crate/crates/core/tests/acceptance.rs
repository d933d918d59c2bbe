//! Acceptance suite: one pass/fail line per criterion, nonzero exit on failure.

use besovlab::verify::{
    check_embeddings, check_heat_snapshot, check_kondratiev_flip, check_manufactured, check_pencil_anchors,
    check_picard, check_rings, check_wavelets, check_weight_ranges, CheckResult, VerifyConfig,
};
use std::thread;

fn main() {
    // timing-sensitive checks run alone before the parallel batch
    let mut results: Vec<CheckResult> = vec![check_pencil_anchors(), check_weight_ranges(), check_wavelets()];
    let heat_level = VerifyConfig::default().heat_level;
    let batch: Vec<CheckResult> = thread::scope(|s| {
        let heat = s.spawn(move || check_heat_snapshot(heat_level));
        let rest = s.spawn(|| {
            vec![
                check_kondratiev_flip(),
                check_picard(),
                check_rings(),
                check_embeddings(),
                check_manufactured(),
            ]
        });
        let mut v = heat.join().expect("heat checks");
        v.extend(rest.join().expect("remaining checks"));
        v
    });
    results.extend(batch);
    results.sort_by_key(|r| r.id.trim_start_matches('C').parse::<u32>().unwrap_or(u32::MAX));
    for r in &results {
        println!("{}", r.line());
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
