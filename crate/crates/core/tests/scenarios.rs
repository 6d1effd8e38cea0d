use std::fs;

use sirvs_core::error::Error;
use sirvs_core::scenarios::{builtin, load_config, load_observed, run_scenario, Builtin, RunOptions};
use sirvs_core::thresholds::Verdict;

fn verdict_at(report: &sirvs_core::ScenarioReport, h: f64) -> Option<Verdict> {
    report
        .verdicts
        .iter()
        .find(|c| c.method == "discrete" && c.h == Some(h))
        .and_then(|c| c.verdict)
}

#[test]
fn extinction_verdicts() {
    let report = run_scenario(&builtin("extinction_5_1").unwrap(), &RunOptions::default()).unwrap();
    assert_eq!(report.continuous.verdict, Verdict::Extinction);
    assert_eq!(verdict_at(&report, 4.0), Some(Verdict::Inconclusive));
    assert_eq!(verdict_at(&report, 1.0), Some(Verdict::Extinction));
    assert_eq!(verdict_at(&report, 0.5), Some(Verdict::Extinction));
    assert_eq!(report.verdicts.len(), 5);
    assert!(report.per_h.iter().all(|r| r.nsfd_summary.first_negative.is_none()));
    let final_i = report.per_h.iter().find(|r| r.h == 1.0).unwrap().nsfd.last().i;
    assert!(final_i < 1e-8, "{final_i}");
}

#[test]
fn persistence_verdicts() {
    let report = run_scenario(&builtin("persistence_5_1").unwrap(), &RunOptions::default()).unwrap();
    assert_eq!(report.continuous.verdict, Verdict::Permanence);
    for h in [2.0, 1.0, 0.5] {
        assert_eq!(verdict_at(&report, h), Some(Verdict::Permanence), "h = {h}");
    }
}

#[test]
fn saturated_variants_share_thresholds() {
    for (sat, mass) in [
        ("saturated_5_1_ext", "extinction_5_1"),
        ("saturated_5_1_per", "persistence_5_1"),
    ] {
        let a = run_scenario(&builtin(sat).unwrap(), &RunOptions::default()).unwrap();
        let b = run_scenario(&builtin(mass).unwrap(), &RunOptions::default()).unwrap();
        assert_eq!(a.continuous.r_lower, b.continuous.r_lower);
        for (x, y) in a.verdicts.iter().zip(&b.verdicts) {
            assert_eq!(x.verdict, y.verdict);
        }
    }
}

#[test]
fn sweep_attached_on_request() {
    let options = RunOptions {
        sweep: true,
        ..RunOptions::default()
    };
    let report = run_scenario(&builtin("extinction_5_1").unwrap(), &options).unwrap();
    let rows = report.consistency.unwrap().sweep.unwrap();
    assert_eq!(rows.len(), 16);
    assert!(rows.iter().all(|r| r.agrees));
}

#[test]
fn measles_consistency_not_applicable() {
    let report = run_scenario(&builtin("measles_france_5_2").unwrap(), &RunOptions::default()).unwrap();
    assert!(report.consistency.is_none());
    assert!(report.consistency_note.unwrap().contains("beta"));
    assert!(report.per_h[0].nsfd.states.iter().all(|s| s.is_nonnegative()));
}

#[test]
fn config_file_reproduces_builtin_and_loads_observed() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("obs.csv"), "t,cases\n0,106\n1,98\n2,120\n").unwrap();
    let mut config = builtin("measles_france_5_2").unwrap().to_config().unwrap();
    config.observed_path = Some("obs.csv".into());
    let path = dir.path().join("measles.json");
    fs::write(&path, config.to_json()).unwrap();

    let spec = load_config(&path).unwrap();
    let observed = spec.observed.as_ref().unwrap();
    assert_eq!(observed.cases[0], spec.initial_state.i);
    let mut plain = spec.clone();
    plain.observed = None;
    plain.observed_path = None;
    assert_eq!(plain, builtin("measles_france_5_2").unwrap());

    let report = run_scenario(&spec, &RunOptions::default()).unwrap();
    let residuals = report.residuals.unwrap();
    assert_eq!(residuals.rows.len(), 3);
    assert_eq!(residuals.rows[0].residual, 0.0);
    assert!(residuals.rms.unwrap() > 0.0);
}

#[test]
fn file_errors_are_classified() {
    let dir = tempfile::tempdir().unwrap();
    let missing = load_config(&dir.path().join("none.json")).unwrap_err();
    assert!(missing.is_io());
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    let err = load_config(&bad).unwrap_err();
    assert!(matches!(err, Error::Parse { .. }) && err.is_configuration());
    let obs = dir.path().join("obs.csv");
    fs::write(&obs, "t,cases\n0,1\n2,3\n1,4\n").unwrap();
    assert!(load_observed(&obs).unwrap_err().to_string().contains("row 4"));
}

#[test]
fn every_builtin_runs() {
    for b in Builtin::ALL {
        let report = run_scenario(&b.spec().unwrap(), &RunOptions::default()).unwrap();
        assert_eq!(
            report.verdicts.len(),
            b.spec().unwrap().h_values.len() + 1,
            "{}",
            b.name()
        );
    }
}
