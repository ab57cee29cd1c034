use tapwise::bench::{render_table, run_reference, DocConfig};
use tapwise::corpus::reference_suite;

#[test]
fn reference_configs_match_pins() {
    let suite = reference_suite().expect("suite loads");
    assert_eq!(suite.tasks.len(), 18);
    let mut reports = Vec::new();
    for config in DocConfig::ALL {
        let dir = tempfile::tempdir().unwrap();
        let report = run_reference(&suite, config, dir.path()).expect("reference run");
        let pin = suite.expected(config.as_str()).expect("pinned");
        let succeeded: Vec<String> = report.results.iter().filter(|r| r.success).map(|r| r.task_id.clone()).collect();
        let mut want = pin.succeeded.clone();
        want.sort();
        assert_eq!(succeeded, want, "{}", config.as_str());
        assert_eq!(report.successes, pin.successes);
        assert_eq!(report.reward_sum(), pin.reward_sum, "{}", config.as_str());
        assert_eq!(report.success_step_sum(), pin.success_step_sum, "{}", config.as_str());
        reports.push(report);
    }
    println!("{}", render_table(&reports));
}
