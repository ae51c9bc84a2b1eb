//! Generate a small synthetic labeled scene on disk so the CLI can be tried
//! without real data:
//!
//! ```text
//! cargo run -p scdl-cli --example make_scene -- demo-data
//! ```

use scdl_core::data::{save_cube, save_labels};
use scdl_core::synthetic::{two_class_scene, SceneConfig};

fn main() {
    let dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "demo-data".to_string());
    let dir = std::path::PathBuf::from(dir);
    std::fs::create_dir_all(&dir).expect("create output directory");
    let scene = two_class_scene(&SceneConfig {
        height: 32,
        width: 32,
        bands: 16,
        snr_db: 20.0,
        noise_var: 10.0,
        seed: 7,
        binned_check: None,
    })
    .expect("generate scene");
    save_cube(&scene.cube, &dir.join("cube.json")).expect("write cube");
    save_labels(&scene.labels, &dir.join("labels.csv")).expect("write labels");
    println!(
        "wrote {}x{}x{} cube and {} labels under {}",
        scene.cube.height(),
        scene.cube.width(),
        scene.cube.bands(),
        scene.labels.len(),
        dir.display()
    );
}
