#![allow(dead_code)]

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sv2a_core::ambisonic::{Direction, Trajectory};
use sv2a_core::audio::{write_wav, AudioBuffer, WavContents, WavEncoding};
use sv2a_core::heatmap::{Heatmap, HeatmapSequence};

pub const FS: u32 = 16_000;

pub fn noise(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| 0.3 * rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn write_mono(path: &Path, samples: Vec<f64>) {
    let buf = AudioBuffer::new(samples, FS).unwrap();
    write_wav(path, &WavContents::Mono(buf), WavEncoding::Float32).unwrap();
}

/// Heatmap frames with a blob drifting from column `from` to column `to`.
pub fn drifting_heatmaps(path: &Path, frames: usize, from: f64, to: f64) {
    let (h, w) = (6, 10);
    let maps = (0..frames)
        .map(|k| {
            let cx = from + (to - from) * k as f64 / (frames - 1).max(1) as f64;
            let values = (0..h * w)
                .map(|i| {
                    let (x, y) = ((i % w + 1) as f64, (i / w + 1) as f64);
                    (-((x - cx).powi(2) + (y - 3.5).powi(2)) / 2.0).exp()
                })
                .collect();
            Heatmap::new(h, w, values).unwrap()
        })
        .collect();
    HeatmapSequence::new(maps, 25.0).unwrap().save(path).unwrap();
}

pub fn write_trajectory(path: &Path, points: &[(f64, f64)]) {
    let t = Trajectory::new(points.iter().map(|&(t, az)| (t, Direction::from_degrees(az, 0.0))).collect()).unwrap();
    t.write_csv(std::fs::File::create(path).unwrap()).unwrap();
}

/// Four clips in `dir`: two heatmap-driven, one trajectory-driven, one with
/// both. Returns the manifest path.
pub fn clip_fixture(dir: &Path, seconds: f64) -> std::path::PathBuf {
    let n = (seconds * FS as f64) as usize;
    for (i, id) in ["a", "b", "c", "d"].iter().enumerate() {
        write_mono(&dir.join(format!("{id}.wav")), noise(n, 40 + i as u64));
    }
    let frames = (seconds * 25.0) as usize;
    drifting_heatmaps(&dir.join("a.hmap"), frames, 2.0, 9.0);
    drifting_heatmaps(&dir.join("b.hmap"), frames, 8.0, 3.0);
    drifting_heatmaps(&dir.join("d.hmap"), frames, 5.0, 5.0);
    write_trajectory(&dir.join("c.csv"), &[(0.0, -60.0), (0.5, 0.0), (1.0, 45.0)]);
    write_trajectory(&dir.join("d.csv"), &[(0.0, 80.0)]);
    let manifest = dir.join("manifest.json");
    std::fs::write(
        &manifest,
        r#"[
  {"id": "a", "audio": "a.wav", "heatmap": "a.hmap", "caption": "car passing"},
  {"id": "b", "audio": "b.wav", "heatmap": "b.hmap"},
  {"id": "c", "audio": "c.wav", "trajectory": "c.csv"},
  {"id": "d", "audio": "d.wav", "heatmap": "d.hmap", "trajectory": "d.csv"}
]"#,
    )
    .unwrap();
    manifest
}
