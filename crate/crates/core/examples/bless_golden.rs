//! Rewrites `fixtures/golden/digests.json` from the current renderer and
//! dumps every fixture as PPM for inspection.
//!
//!     cargo run -p t2c-core --example bless_golden -- /tmp/golden
//!
//! Look at the images before committing new digests.

use std::collections::BTreeMap;
use std::path::PathBuf;

use t2c_core::dataset::render_camera_image;
use t2c_core::raster::{overlay, render_trajectory_image};
use t2c_core::verify::{golden_camera, golden_fixtures, render_digests};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dump: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "golden-images".into()).into();
    std::fs::create_dir_all(&dump)?;
    let cam = golden_camera();
    let mut table = BTreeMap::new();
    for fx in golden_fixtures()? {
        let traj = render_trajectory_image(&fx.plan, &cam);
        let camera = render_camera_image(&fx.scene, &cam);
        traj.save_ppm(dump.join(format!("{}_trajectory.ppm", fx.name)))?;
        camera.save_ppm(dump.join(format!("{}_camera.ppm", fx.name)))?;
        overlay(&camera, &traj)?.save_ppm(dump.join(format!("{}_overlay.ppm", fx.name)))?;
        table.insert(fx.name.clone(), render_digests(&fx, &cam)?);
    }
    let out = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/golden/digests.json");
    std::fs::write(out, serde_json::to_string_pretty(&table)? + "\n")?;
    println!("{} fixtures -> {out}; images in {}", table.len(), dump.display());
    Ok(())
}
