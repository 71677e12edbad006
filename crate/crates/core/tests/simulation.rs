use dichogeo::sim::{
    run_replicate, run_scenario, standard_scenarios, FitStatus, Model, ScenarioSpec, SimReport, SimSettings, PARAMETERS,
};

fn spec(n_reps: usize) -> ScenarioSpec {
    ScenarioSpec::new(1.0, 0.2, 0.2, n_reps, 11)
}

#[test]
fn replicate_is_bitwise_reproducible() {
    let settings = SimSettings::default();
    let a = run_replicate(&spec(1), 0, &settings).unwrap();
    let b = run_replicate(&spec(1), 0, &settings).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let other = run_replicate(&spec(1), 1, &settings).unwrap();
    assert_ne!(a.seed, other.seed);
}

#[test]
fn checkpoints_are_resumed() {
    let dir = tempfile::tempdir().unwrap();
    let settings = SimSettings { checkpoint_dir: Some(dir.path().to_path_buf()), ..Default::default() };
    let first = run_scenario(&spec(2), &settings).unwrap();

    let cell = dir.path().join("tau2=1_phi=0.2_c=0.2_seed=11_unit225");
    let files: Vec<_> = std::fs::read_dir(&cell).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(files.len(), 2, "{files:?}");

    // a doctored checkpoint is trusted, which proves it was read back
    let path = cell.join("rep_00001.json");
    let mut rec: dichogeo::sim::ReplicateRecord = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    rec.linear.message = "from disk".into();
    std::fs::write(&path, serde_json::to_string(&rec).unwrap()).unwrap();

    let second = run_scenario(&spec(3), &settings).unwrap();
    assert_eq!(second.replicates.len(), 3);
    // resumed records are bit-identical apart from the replicate count
    let a = &second.replicates[0];
    let b = &first.replicates[0];
    assert_eq!((&a.binomial, &a.linear, a.seed), (&b.binomial, &b.linear, b.seed));
    assert_eq!(a.spec.n_reps, 3);
    assert_eq!(second.replicates[1].linear.message, "from disk");

    // a checkpoint from a different cell is not reused
    let other = ScenarioSpec { seed: 12, ..spec(1) };
    let third = run_scenario(&other, &settings).unwrap();
    assert_ne!(third.replicates[0].seed, first.replicates[0].seed);
}

#[test]
fn report_rows_are_consistent() {
    let report = SimReport::run(&[spec(3)], &SimSettings::default()).unwrap();
    let cell = &report.cells[0];
    assert_eq!(cell.rows.len(), 2 * PARAMETERS.len());
    let ok_b = cell.replicates.iter().filter(|r| r.binomial.status == FitStatus::Ok).count();
    assert_eq!(cell.row("alpha_t", Model::B).unwrap().n_ok, ok_b);
    assert_eq!(
        ok_b + cell.n_failed_b + cell.n_boundary_b,
        3,
        "every replicate is either used or counted as excluded"
    );
    for r in &cell.rows {
        if r.n_ok > 0 {
            assert!(r.mse >= r.bias * r.bias - 1e-15, "{r:?}");
        }
    }
    let csv = report.to_csv();
    assert_eq!(csv.lines().count(), 1 + 8);
    assert!(report.to_table().contains("| B"));
    assert_eq!(report.replicates_csv().lines().count(), 1 + 6);
}

#[test]
fn standard_cells_share_seed_and_validate() {
    let cells = standard_scenarios(5, 3);
    assert_eq!(cells.len(), 18);
    for c in &cells {
        c.validate().unwrap();
        assert_eq!(c.seed, 3);
    }
    let mut labels: Vec<_> = cells.iter().map(|c| c.label()).collect();
    labels.dedup();
    assert_eq!(labels.len(), 18);
}
