//! Expand a minimal JSON configuration, print its canonical form and hash,
//! and round-trip a results table through CSV.
//!
//! Usage: `config_io [config.json]`

use std::path::Path;

use onft::config::{config_hash, config_to_json, load_config, parse_config, read_results, write_results, ResultRow};

const MINIMAL: &str = r#"{
  "scene": { "case": "onf_surface", "orientation": "radial", "k0a": 1.44 }
}"#;

fn main() -> onft::Result<()> {
    let config = match std::env::args().nth(1) {
        Some(path) => load_config(&path)?,
        None => parse_config(MINIMAL, Path::new("<built-in>"))?,
    };
    println!("{}", config_to_json(&config));
    let hash = config_hash(&config);
    println!("hash {hash}");

    let again = parse_config(&config_to_json(&config), Path::new("<round trip>"))?;
    assert_eq!(again, config);

    let rows: Vec<ResultRow> = [0.1, 0.0, 0.05]
        .into_iter()
        .map(|d| ResultRow {
            case: config.scene.case,
            orientation: config.scene.orientation,
            k0a: config.scene.k0a(),
            radius_um: config.scene.radius_um,
            sweep_var: "d_r".into(),
            sweep_val_um: d,
            transmission: 0.2 * (-d / 0.07f64).exp(),
            purcell: 1.2,
            eta: 0.2 * (-d / 0.07f64).exp() / 1.2,
            steps: 0,
            wall_s: 0.0,
            config_hash: hash.clone(),
        })
        .collect();
    let path = std::env::temp_dir().join(format!("onft-results-{}.csv", std::process::id()));
    write_results(&rows, &path)?;
    print!("{}", std::fs::read_to_string(&path).map_err(|e| onft::Error::Io { path: path.clone(), source: e })?);
    let back = read_results(&path)?;
    println!("read back {} rows", back.len());
    let _ = std::fs::remove_file(&path);
    Ok(())
}
