mod common;

use common::*;

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let (one, four) = (dir.path().join("one"), dir.path().join("four"));
    let s1 = run_all(&mini_config(), &one, "1");
    let s4 = run_all(&mini_config(), &four, "4");
    assert_eq!(s1, s4);
    let (a, b) = (read_dir(&one), read_dir(&four));
    assert_eq!(a.len(), 8);
    assert_eq!(a, b);
}

#[test]
fn csv_format() {
    let dir = tempfile::tempdir().unwrap();
    run_all(&mini_config(), dir.path(), "2");
    let header = |name: &str| {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(!text.contains('\r'));
        assert!(text.ends_with('\n'));
        text.lines().next().unwrap().to_string()
    };
    assert_eq!(header("trajectory.csv"), "t,energy,x_h1,v_h,y_h,slow_residual,fast_residual");
    assert_eq!(header("avg_drift.csv"), "k,value,stderr");
    assert_eq!(header("mixing.csv"), "t,mean_sq_diff,fitted_exponent");
    assert_eq!(header("rate_study.csv"), "epsilon,delta,dt,replicas,aborted,mse_mean,mse_stderr");
    assert_eq!(header("rate_summary.csv"), "slope,ci_low,ci_high");
    assert_eq!(header("lemma_checks.csv"), "check,measured,band_low,band_high,verdict");
    // every float carries 17 significant digits
    let text = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    for cell in text.lines().skip(1).flat_map(|l| l.split(',')) {
        let mantissa = cell.split('e').next().unwrap().trim_start_matches('-');
        assert_eq!(mantissa.len(), 18, "{cell}");
    }
}
