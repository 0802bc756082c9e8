//! One pass/fail line per acceptance criterion. Run with `--nocapture` to see
//! the report.

use rotspec::config::SimulationConfig;
use rotspec::selftest;

#[test]
fn acceptance() {
    let cfg = SimulationConfig::default();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let reports = selftest::run_all(&cfg, workers);
    for r in &reports {
        println!("{r}");
    }
    assert_eq!(reports.len(), 7);
    let failed: Vec<usize> = reports.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
