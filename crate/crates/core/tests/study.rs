use smalljump::study::{run_study, StudyConfig, StudyKind};

const VERIFY: &str = r#"
kind = "verify"
label = "t"
eps = [0.1, 0.05]
n_paths = 4000
n_steps = 32
seed = 3
bounds = ["T1", "T4", "T5", "T7", "B3"]

[model]
name = "cgmy"
b = 0.2
params = { C = 1.0, G = 5.0, M = 5.0, Y = 1.2 }
"#;

fn verify_rows(n_paths: usize) -> Vec<csv::StringRecord> {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = StudyConfig::from_toml_str(VERIFY).unwrap();
    cfg.n_paths = n_paths;
    cfg.out = Some(dir.path().to_path_buf());
    let outcome = run_study(&cfg).unwrap();
    assert_eq!(outcome.exit_code(), 0);
    let text = std::fs::read_to_string(&outcome.files[0]).unwrap();
    assert!(text.starts_with("# smalljump verify schema v1\n"));
    let body: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let header = rdr.headers().unwrap().clone();
    assert_eq!(&header[1], "bound");
    assert_eq!(&header[header.len() - 1], "verdict");
    rdr.records().map(|r| r.unwrap()).collect()
}

#[test]
fn verify_rows_and_stderr_scaling() {
    let small = verify_rows(4000);
    let large = verify_rows(8000);
    assert_eq!(small.len(), large.len());
    let mut ratios = Vec::new();
    for (a, b) in small.iter().zip(&large) {
        assert_eq!(&a[1], &b[1]);
        match &a[a.len() - 1] {
            "SKIP" => assert_eq!(&a[1], "T5"),
            v => assert_eq!(v, "PASS", "{a:?}"),
        }
        let (sa, sb): (f64, f64) = (a[6].parse().unwrap_or(f64::NAN), b[6].parse().unwrap_or(f64::NAN));
        if sa > 0.0 && sb > 0.0 {
            ratios.push(sb / sa);
        }
    }
    assert!(!ratios.is_empty());
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!((mean - 0.5f64.sqrt()).abs() < 0.08, "stderr ratio {mean}");
}

#[test]
fn every_kind_runs_on_a_small_config() {
    for kind in StudyKind::ALL {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = StudyConfig::from_toml_str(VERIFY).unwrap();
        cfg.kind = Some(kind);
        cfg.n_paths = 500;
        cfg.budgets = vec![0.5];
        cfg.out = Some(dir.path().to_path_buf());
        let outcome = run_study(&cfg).unwrap_or_else(|e| panic!("{kind}: {e}"));
        assert!(!outcome.files.is_empty());
        for f in &outcome.files {
            let text = std::fs::read_to_string(f).unwrap();
            assert!(text.lines().count() > 2, "{kind}: {}", f.display());
        }
    }
}
