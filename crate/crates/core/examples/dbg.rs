// scratch: final depth-10 validation for criteria 9/10
use std::time::Instant;
use warpnerf::field::{FieldConfig, HashGridConfig, HashMode};
use warpnerf::model::{SpaceConfig, SpaceModel, WarpMode};
use warpnerf::renderer::{LossWeights, TrainConfig, TrainState};
use warpnerf::sampling::SampleMode;
use warpnerf::scenes::*;

fn main() {
    let scene = SphereScene::three_spheres();
    let traj = gen_trajectory(TrajectoryKind::Free, &TrajectoryParams { n_poses: 45, width: 64, height: 64, seed: 1, focus: 3, ..Default::default() }, &scene).unwrap();
    let dir = std::path::PathBuf::from("/tmp/toyds");
    let _ = std::fs::remove_dir_all(&dir);
    write_dataset(&scene, &traj, &dir).unwrap();
    let data = read_dataset(&dir).unwrap();
    for (name, w, s, seed) in [
        ("pers+exp  d10 s1", WarpMode::Perspective, SampleMode::Exp, 1u64),
        ("none+unif d10 s1", WarpMode::None, SampleMode::Uniform, 1),
        ("pers+pers d10 s2", WarpMode::Perspective, SampleMode::Perspective, 2),
        ("pers+pers d10 s3", WarpMode::Perspective, SampleMode::Perspective, 3),
    ] {
        let t0 = Instant::now();
        let tb = Instant::now();
        let model = SpaceModel::build(&data.cameras, &SpaceConfig { lattice: 16, warp_mode: w, max_depth: 10, seed, ..Default::default() }).unwrap();
        let build_s = tb.elapsed().as_secs_f64();
        let field_cfg = FieldConfig {
            grid: HashGridConfig { levels: 16, table_len: 1 << 14, feat_dim: 2, base_res: 16, max_res: 1024, mode: HashMode::Single },
            ..FieldConfig::default()
        };
        let cfg = TrainConfig {
            steps: 2000, point_batch: 8192, lr_peak: 0.05, lr_final: 0.005, lr_warmup_steps: 200,
            tv_points: 512, seed, sample_mode: s, max_samples: 1024,
            sample_interval: 2.0 * 3f64.sqrt(), ..TrainConfig::default()
        };
        let weights = LossWeights::default();
        let mut state = TrainState::new(model, field_cfg, seed);
        let tt = Instant::now();
        let mut r100 = 0.0; let mut rlast = 0.0;
        for step in 0..cfg.steps {
            let st = state.train_step(&data, &cfg, &weights).unwrap();
            if step < 100 { r100 += st.recon / 100.0; }
            if step >= 1900 { rlast += st.recon / 100.0; }
        }
        let train_s = tt.elapsed().as_secs_f64();
        let (_, test_ids) = data.split();
        let mut mean = 0.0;
        for &i in &test_ids {
            let img = state.render(&data.cameras[i], &cfg);
            mean += psnr(&img, &data.images[i]).unwrap() / test_ids.len() as f64;
        }
        println!("{name}: psnr {mean:.2} dB | recon {r100:.4}->{rlast:.4} | build {build_s:.0}s train {train_s:.0}s total {:.0}s", t0.elapsed().as_secs_f64());
    }
}
