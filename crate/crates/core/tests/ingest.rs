use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use tweezer_thermo::ingest::{fit_calibration_histogram, load_raw_shots, load_record, save_record, DEFAULT_PEAKS};
use tweezer_thermo::protocols::{MeasurementRecord, RecordMetadata, Shot};

/// Camera pipeline: offset 100 counts, 40 counts per atom, read noise 4.
fn camera(atoms: u32, rng: &mut ChaCha8Rng) -> i64 {
    let noise = Normal::new(0.0, 4.0).unwrap();
    (100.0 + 40.0 * atoms as f64 + noise.sample(rng)).round() as i64
}

#[test]
fn raw_camera_file_maps_back_to_atom_numbers() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let loading = Poisson::new(1.65).unwrap();
    let mut text = String::from("# trap: site-3\nt_us,photons\n");
    for _ in 0..400 {
        let n = (loading.sample(&mut rng) as u32).min(7);
        text.push_str(&format!("0,{}\n", camera(n, &mut rng)));
    }
    let mut truth = Vec::new();
    for _ in 0..60 {
        let t = 2.0 * rng.random_range(5..40) as f64;
        let n = (loading.sample(&mut rng) as u32).min(7);
        text.push_str(&format!("{t},{}\n", camera(n, &mut rng)));
        truth.push((t, n));
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("camera.csv");
    std::fs::write(&path, text).unwrap();

    let raw = load_raw_shots(&path).unwrap();
    assert_eq!(raw.metadata.trap_id.as_deref(), Some("site-3"));
    let fit = fit_calibration_histogram(&raw.calibration_counts(), DEFAULT_PEAKS).unwrap();
    assert!((fit.peak_offset - 100.0).abs() < 2.0, "{fit:?}");
    assert!((fit.peak_spacing - 40.0).abs() < 1.0, "{fit:?}");
    let (record, diag) = raw.to_record(&fit, 7);
    assert_eq!(diag.below_zero + diag.above_cap, 0);
    assert_eq!(record.calibration.len(), 400);
    let got: Vec<(f64, u32)> = record.shots.iter().map(|s| (s.time * 1e6, s.atoms)).collect();
    for ((t, n), (gt, gn)) in truth.iter().zip(&got) {
        assert!((t - gt).abs() < 1e-9);
        assert_eq!(n, gn);
    }
}

#[test]
fn records_round_trip_through_files() {
    let mut metadata = RecordMetadata { trap_id: Some("a".into()), ..Default::default() };
    metadata.labels.insert("operator".into(), "lab 2".into());
    let record = MeasurementRecord {
        shots: [(22.0, 1), (14.5, 0), (60.0, 3)]
            .iter()
            .map(|&(t, n)| Shot::new(t / 1e6, n).unwrap())
            .collect(),
        calibration: vec![1, 2, 0, 4],
        metadata,
    };
    let dir = tempfile::tempdir().unwrap();
    for name in ["r.csv", "r.json"] {
        let path = dir.path().join(name);
        save_record(&record, &path).unwrap();
        assert_eq!(load_record(&path).unwrap(), record, "{name}");
    }
}
