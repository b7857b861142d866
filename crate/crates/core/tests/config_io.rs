use std::path::{Path, PathBuf};

use onft::config::{
    config_hash, config_to_json, load_config, parse_config, read_results, results_csv, write_config, write_results,
    Preset, ResultRow, SimulationConfig,
};
use onft::scene::{CaseId, Orientation, SceneSpec};
use proptest::prelude::*;

fn case_strategy() -> impl Strategy<Value = CaseId> {
    prop_oneof![
        Just(CaseId::OnfSurface),
        Just(CaseId::OnfInside),
        Just(CaseId::OnftInside),
        Just(CaseId::OnftFacet)
    ]
}

fn orientation_strategy() -> impl Strategy<Value = Orientation> {
    prop_oneof![Just(Orientation::Radial), Just(Orientation::Azimuthal), Just(Orientation::Axial)]
}

fn config_for(case: CaseId, orientation: Orientation, k0a: f64, offset: f64, preset: Preset) -> SimulationConfig {
    let mut scene = SceneSpec::with_k0a(case, k0a, orientation);
    match case {
        CaseId::OnfSurface => scene.offsets.d_r = offset,
        CaseId::OnftFacet => {
            scene.offsets.d_x = offset;
            scene.offsets.d_y = -0.5 * offset;
            scene.offsets.d_z = 0.25 * offset;
        }
        _ => {}
    }
    SimulationConfig::preset(preset, scene).unwrap()
}

fn row(case: CaseId, orientation: Orientation, v: f64, eta: f64) -> ResultRow {
    ResultRow {
        case,
        orientation,
        k0a: 1.44,
        radius_um: 0.142093533,
        sweep_var: "d_r".into(),
        sweep_val_um: v,
        transmission: eta * 1.3,
        purcell: 1.3,
        eta,
        steps: 12345,
        wall_s: 12.5,
        config_hash: "ab".repeat(32),
    }
}

#[test]
fn minimal_file_loads() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    std::fs::write(&path, r#"{"scene": {"case": "onf_surface", "orientation": "radial", "k0a": 1.44}}"#).unwrap();
    let c = load_config(&path).unwrap();
    assert_eq!(c.preset, Preset::Desk);
    assert_eq!(c.grid.extent_um, [4.0, 4.0, 12.0]);
    // twenty cells per wavelength in silica, snapped to divide the domain
    let nominal = 0.62 / (20.0 * c.scene.core_index().unwrap());
    assert!(c.grid.cell_um <= nominal && c.grid.cell_um > 0.95 * nominal, "{}", c.grid.cell_um);
}

#[test]
fn paper_full_preset() {
    let c = config_for(CaseId::OnftFacet, Orientation::Radial, 7.16, 0.0, Preset::PaperFull);
    assert_eq!(c.grid.extent_um, [6.0, 6.0, 25.0]);
    assert_eq!(c.layout.monitor_distance_um, 15.0);
}

#[test]
fn errors_name_the_problem() {
    let err = parse_config(
        r#"{"grid": {"cell_um": 0.02}, "scene": {"case": "onf_surface", "orientation": "radial", "radius_um": 0.01}}"#,
        Path::new("x.json"),
    )
    .unwrap_err();
    assert!(err.to_string().contains("geometry unresolvable"), "{err}");
    assert_eq!(err.exit_code(), 2);
    let err = parse_config(r#"{"scene": {"case": "onf_surface", "orientation": "radial", "k0a": 1.4}, "grdi": {}}"#, Path::new("x.json"))
        .unwrap_err();
    assert!(err.to_string().contains("grdi"), "{err}");
    let err = parse_config("{\n  \"scene\": [\n", Path::new("x.json")).unwrap_err();
    assert!(err.to_string().contains("line"), "{err}");
}

#[test]
fn empty_results_are_header_only() {
    let text = String::from_utf8(results_csv(&[]).unwrap()).unwrap();
    assert_eq!(text, "case,orientation,k0a,radius_um,sweep_var,sweep_val_um,T,PF,eta,steps,wall_s,config_hash\n");
}

#[test]
fn peak_rows_sort_by_k0a() {
    let rows: Vec<ResultRow> = [7.16, 2.01, 10.05, 4.39]
        .into_iter()
        .map(|k| {
            let mut r = row(CaseId::OnftFacet, Orientation::Radial, k, 0.44);
            r.sweep_var = "k0a".into();
            r.k0a = k;
            r
        })
        .collect();
    let text = String::from_utf8(results_csv(&rows).unwrap()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    let ks: Vec<f64> = lines[1..].iter().map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(ks, vec![2.01, 4.39, 7.16, 10.05]);
}

#[test]
fn hash_tracks_physics_only() {
    let a = config_for(CaseId::OnfSurface, Orientation::Radial, 1.44, 0.0, Preset::Desk);
    let mut b = a.clone();
    b.output_dir = PathBuf::from("/elsewhere");
    assert_eq!(config_hash(&a), config_hash(&b));
    let mut c = a.clone();
    c.scene.offsets.d_r = 1e-6;
    assert_ne!(config_hash(&a), config_hash(&c));
    let mut d = a.clone();
    d.runtime.residual_tol *= 0.5;
    assert_ne!(config_hash(&a), config_hash(&d));
    let mut e = a.clone();
    e.cpml.kappa_max += 0.5;
    assert_ne!(config_hash(&a), config_hash(&e));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn config_round_trips(
        case in case_strategy(),
        orientation in orientation_strategy(),
        k0a in 1.0f64..12.5,
        offset in 0.0f64..0.3,
        full in any::<bool>(),
    ) {
        let preset = if full { Preset::PaperFull } else { Preset::Desk };
        let config = config_for(case, orientation, k0a, offset, preset);
        let back = parse_config(&config_to_json(&config), Path::new("<rt>")).unwrap();
        prop_assert_eq!(&back, &config);
        prop_assert_eq!(config_hash(&back), config_hash(&config));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        write_config(&config, &path).unwrap();
        prop_assert_eq!(load_config(&path).unwrap(), config);
    }

    #[test]
    fn results_round_trip_to_nine_digits(
        rows in prop::collection::vec((orientation_strategy(), 0.0f64..1.0), 0..12),
    ) {
        let rows: Vec<ResultRow> = rows
            .into_iter()
            .enumerate()
            .map(|(i, (o, e))| row(CaseId::OnfSurface, o, 0.07 * i as f64 - 0.4, e))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        write_results(&rows, &p1).unwrap();
        let mut reversed = rows.clone();
        reversed.reverse();
        write_results(&reversed, &p2).unwrap();
        prop_assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());

        let back = read_results(&p1).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        for w in back.windows(2) {
            prop_assert!((w[0].orientation, w[0].sweep_val_um) <= (w[1].orientation, w[1].sweep_val_um));
        }
        for r in &back {
            let orig = rows
                .iter()
                .min_by(|a, b| (a.sweep_val_um - r.sweep_val_um).abs().total_cmp(&(b.sweep_val_um - r.sweep_val_um).abs()))
                .unwrap();
            prop_assert_eq!(orig.orientation, r.orientation);
            prop_assert!((r.sweep_val_um - orig.sweep_val_um).abs() <= 1e-9);
            prop_assert!((r.eta - orig.eta).abs() <= 5e-9 * orig.eta.abs());
            prop_assert_eq!(&r.config_hash, &orig.config_hash);
        }
    }
}
