//! Generates a synthetic terrain, prints the class shares and writes a PNG.
//!
//! `cargo run --example terrain -- [out.png]`

use alipp::export::{default_scale, render_labels, save_png};
use alipp::terrain::{capture_image, generate_synthetic_terrain, CameraConfig, Pose, TerrainParams};

fn main() -> alipp::Result<()> {
    let mut params = TerrainParams::new(3, 128, 96, 4, 16.0);
    params.class_decay = 0.5;
    params.region_variation = 0.1;
    params.resolution_m = 1.0;
    let raster = generate_synthetic_terrain(&params)?;

    let mut counts = vec![0usize; raster.num_classes];
    for &l in &raster.labels {
        counts[l as usize] += 1;
    }
    let total = raster.labels.len() as f64;
    for (k, n) in counts.iter().enumerate() {
        println!("class {k}: {:5.1}% of cells", 100.0 * *n as f64 / total);
    }

    let camera = CameraConfig { image_width_px: 12, image_height_px: 12, gsd_m: 1.0, ..Default::default() };
    let img = capture_image(&raster, &camera, &Pose::new(40.0, 30.0, camera.altitude_m), 1)?;
    println!("image at (40, 30): {}x{} px, footprint {:?}", img.width, img.height, img.footprint);

    let out = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("terrain.png").display().to_string());
    save_png(&render_labels(&raster.geometry, &raster.labels, default_scale(&raster.geometry)), out.as_ref())?;
    println!("wrote {out}");
    Ok(())
}
