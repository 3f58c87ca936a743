//! Subcommand implementations.

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use std::path::{Path, PathBuf};
use std::time::Instant;

use warpnerf::checkpoint::{load_checkpoint, save_checkpoint};
use warpnerf::field::{FieldConfig, HashGridConfig, HashMode};
use warpnerf::model::{SpaceConfig, SpaceModel, WarpMode};
use warpnerf::renderer::{
    render_image, LossWeights, RunningLoss, TrainConfig, TrainState,
};
use warpnerf::sampling::SampleMode;
use warpnerf::scenes::{
    gen_trajectory, psnr, read_dataset, write_dataset, Dataset, SphereScene, TrajectoryKind,
    TrajectoryParams,
};
use warpnerf::warp::sample_region_points;
use warpnerf::Error;

use crate::manifest::{git_describe, RunManifest, RunStats};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PresetArg {
    /// Three spheres along a free camera path.
    ThreeSpheresFree,
    /// Ring of cameras orbiting the spheres.
    Orbit,
    /// Forward-facing jittered camera plane.
    Forward,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum WarpArg {
    Perspective,
    None,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SampleArg {
    Perspective,
    Exp,
    Uniform,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum HashArg {
    Single,
    PerNode,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SplitArg {
    Test,
    Train,
    All,
}

#[derive(Args)]
pub struct GenArgs {
    /// Scene + trajectory preset.
    #[arg(long, value_enum, default_value = "three-spheres-free")]
    preset: PresetArg,
    #[arg(long, default_value_t = 45)]
    n_images: usize,
    #[arg(long, default_value_t = 64)]
    width: u32,
    #[arg(long, default_value_t = 64)]
    height: u32,
    #[arg(long, default_value_t = 50.0)]
    fov: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

pub fn gen(args: GenArgs) -> anyhow::Result<()> {
    let scene = SphereScene::three_spheres();
    let params = TrajectoryParams {
        n_poses: args.n_images,
        width: args.width,
        height: args.height,
        fov_deg: args.fov,
        seed: args.seed,
        focus: 3, // aim at the foreground spheres, not the backdrops
        ..Default::default()
    };
    let kind = match args.preset {
        PresetArg::ThreeSpheresFree => TrajectoryKind::Free,
        PresetArg::Orbit => TrajectoryKind::Orbit,
        PresetArg::Forward => TrajectoryKind::ForwardFacing,
    };
    let traj = gen_trajectory(kind, &params, &scene)?;
    write_dataset(&scene, &traj, &args.out)?;
    println!(
        "wrote {} views at {}x{} to {}",
        args.n_images,
        args.width,
        args.height,
        args.out.display()
    );
    Ok(())
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Load every setting from an existing run manifest (reproduction mode).
    #[arg(long)]
    from_manifest: Option<PathBuf>,

    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[arg(long, default_value_t = 8192)]
    point_batch: usize,
    #[arg(long, default_value_t = 0.1)]
    lr_peak: f64,
    #[arg(long, default_value_t = 200)]
    lr_warmup: usize,
    #[arg(long, default_value_t = 0.01)]
    lr_final: f64,
    #[arg(long, default_value_t = 1024)]
    tv_points: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value = "perspective")]
    warp: WarpArg,
    #[arg(long, value_enum, default_value = "perspective")]
    sample: SampleArg,
    #[arg(long, value_enum, default_value = "single")]
    hash_mode: HashArg,

    #[arg(long, default_value_t = 16)]
    levels: usize,
    /// Feature rows per level, log2.
    #[arg(long, default_value_t = 14)]
    table_size_log2: u32,
    #[arg(long, default_value_t = 2)]
    feat_dim: usize,
    #[arg(long, default_value_t = 16)]
    base_res: usize,
    #[arg(long, default_value_t = 1024)]
    max_res: usize,
    #[arg(long, default_value_t = 64)]
    hidden: usize,

    #[arg(long, default_value_t = 3.0)]
    lambda: f64,
    #[arg(long, default_value_t = 4)]
    n_c: usize,
    #[arg(long, default_value_t = 12)]
    max_depth: u32,
    /// Warp-construction lattice points per axis.
    #[arg(long, default_value_t = 16)]
    lattice: usize,
    /// Sampling interval in warp units.
    #[arg(long, default_value_t = 1.7320508075688772)]
    l: f64,
    #[arg(long, default_value_t = 1024)]
    max_samples: usize,

    #[arg(long, default_value_t = 1e-3)]
    lambda_disp: f64,
    #[arg(long, default_value_t = 1e-1)]
    lambda_tv: f64,
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,

    /// Progress print interval in steps (0 silences).
    #[arg(long, default_value_t = 100)]
    log_every: usize,
}

fn manifest_from_args(args: &TrainArgs, dataset: &Path) -> RunManifest {
    let warp_mode = match args.warp {
        WarpArg::Perspective => WarpMode::Perspective,
        WarpArg::None => WarpMode::None,
    };
    let sample_mode = match args.sample {
        SampleArg::Perspective => SampleMode::Perspective,
        SampleArg::Exp => SampleMode::Exp,
        SampleArg::Uniform => SampleMode::Uniform,
    };
    let mode = match args.hash_mode {
        HashArg::Single => HashMode::Single,
        // Slot count is patched after the model is built.
        HashArg::PerNode => HashMode::PerNode { slots: 0 },
    };
    RunManifest {
        version: env!("CARGO_PKG_VERSION").into(),
        git: git_describe(),
        dataset: dataset.display().to_string(),
        seed: args.seed,
        space: SpaceConfig {
            lambda: args.lambda,
            n_c: args.n_c,
            max_depth: args.max_depth,
            lattice: args.lattice,
            warp_mode,
            seed: args.seed,
        },
        field: FieldConfig {
            grid: HashGridConfig {
                levels: args.levels,
                table_len: 1usize << args.table_size_log2,
                feat_dim: args.feat_dim,
                base_res: args.base_res,
                max_res: args.max_res,
                mode,
            },
            hidden: args.hidden,
            density_out: 16,
            sh_dim: 16,
        },
        train: TrainConfig {
            steps: args.steps,
            point_batch: args.point_batch,
            lr_peak: args.lr_peak,
            lr_warmup_steps: args.lr_warmup,
            lr_final: args.lr_final,
            tv_points: args.tv_points,
            adam_beta1: 0.9,
            adam_beta2: 0.99,
            adam_eps: 1e-15,
            seed: args.seed,
            sample_mode,
            sample_interval: args.l,
            max_samples: args.max_samples,
        },
        weights: LossWeights {
            lambda_disp: args.lambda_disp,
            lambda_tv: args.lambda_tv,
            eps: args.eps,
        },
    }
}

pub fn train(args: TrainArgs) -> anyhow::Result<()> {
    let mut manifest = match &args.from_manifest {
        Some(path) => RunManifest::read(path).context("reading manifest")?,
        None => {
            let dataset = args
                .dataset
                .clone()
                .ok_or_else(|| Error::InvalidArgument("--dataset is required".into()))?;
            manifest_from_args(&args, &dataset)
        }
    };
    std::fs::create_dir_all(&args.out)?;
    let data = read_dataset(Path::new(&manifest.dataset)).context("reading dataset")?;

    let t_build = Instant::now();
    let model = SpaceModel::build(&data.cameras, &manifest.space)?;
    let build_seconds = t_build.elapsed().as_secs_f64();
    if let HashMode::PerNode { slots } = &mut manifest.field.grid.mode {
        *slots = model.warped_leaf_count();
    }
    // The manifest is on disk before the first step runs.
    manifest.write(&args.out.join("manifest.json"))?;

    println!(
        "octree: {} nodes, {} warped leaves ({build_seconds:.1}s)",
        model.tree.nodes.len(),
        model.warped_leaf_count()
    );

    let mut state = TrainState::new(model, manifest.field.clone(), manifest.seed);
    let mut losses = RunningLoss::default();
    let t_train = Instant::now();
    for step in 0..manifest.train.steps {
        let stats = state.train_step(&data, &manifest.train, &manifest.weights)?;
        if args.log_every > 0 && (step % args.log_every == 0 || step + 1 == manifest.train.steps)
        {
            println!(
                "step {:>6}: recon {:.5} disp {:.5} tv {:.5} lr {:.4} rays {} pts {}",
                stats.step, stats.recon, stats.disp, stats.tv, stats.lr, stats.rays, stats.points
            );
        }
        losses.push(stats);
    }
    let train_seconds = t_train.elapsed().as_secs_f64();

    std::fs::write(args.out.join("loss.csv"), losses.to_csv())?;
    save_checkpoint(
        &args.out.join("checkpoint.bin"),
        &state,
        &manifest.train,
        &manifest.weights,
    )?;
    let stats = RunStats {
        build_seconds,
        train_seconds,
        steps: state.step,
        warped_leaves: state.model.warped_leaf_count(),
        octree_nodes: state.model.tree.nodes.len(),
        final_recon: losses.history.last().map(|s| s.recon).unwrap_or(f64::NAN),
    };
    std::fs::write(
        args.out.join("run_stats.json"),
        serde_json::to_string_pretty(&stats)?,
    )?;
    println!(
        "trained {} steps in {train_seconds:.1}s; outputs in {}",
        state.step,
        args.out.display()
    );
    Ok(())
}

#[derive(Args)]
pub struct RenderArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
}

fn split_indices(data: &Dataset, split: SplitArg) -> Vec<usize> {
    let (train, test) = data.split();
    match split {
        SplitArg::Test => test,
        SplitArg::Train => train,
        SplitArg::All => (0..data.cameras.len()).collect(),
    }
}

pub fn render(args: RenderArgs) -> anyhow::Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let data = read_dataset(&args.dataset)?;
    std::fs::create_dir_all(&args.out)?;
    let layout = ckpt.field_cfg.layout();
    for i in split_indices(&data, args.split) {
        let img = render_image(
            &ckpt.model,
            &ckpt.field_cfg,
            &layout,
            &ckpt.params,
            &data.cameras[i],
            &ckpt.train_cfg,
        );
        img.save_png(&args.out.join(format!("{i:04}.png")))?;
    }
    println!("renders written to {}", args.out.display());
    Ok(())
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

pub fn eval(args: EvalArgs) -> anyhow::Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let data = read_dataset(&args.dataset)?;
    std::fs::create_dir_all(&args.out)?;
    let layout = ckpt.field_cfg.layout();
    let (_, test) = data.split();
    if test.is_empty() {
        bail!(Error::InvalidArgument(
            "dataset has no test views (needs at least 8 images)".into()
        ));
    }
    let mut csv = String::from("view,psnr_db\n");
    let mut mean = 0.0;
    println!("view   psnr(dB)");
    for &i in &test {
        let img = render_image(
            &ckpt.model,
            &ckpt.field_cfg,
            &layout,
            &ckpt.params,
            &data.cameras[i],
            &ckpt.train_cfg,
        );
        img.save_png(&args.out.join(format!("{i:04}.png")))?;
        // Compare at 8-bit precision on both sides, like the stored data.
        let mut quant = img.clone();
        for (q, v) in quant.data.iter_mut().zip(img.quantized()) {
            *q = v as f64 / 255.0;
        }
        let p = psnr(&quant, &data.images[i])?;
        csv.push_str(&format!("{i},{p:.4}\n"));
        println!("{i:>4}   {p:8.2}");
        mean += p / test.len() as f64;
    }
    csv.push_str(&format!("mean,{mean:.4}\n"));
    println!("mean   {mean:8.2}");
    std::fs::write(args.out.join("psnr.csv"), csv)?;
    Ok(())
}

#[derive(Args)]
pub struct DumpArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Write the full octree as JSON.
    #[arg(long)]
    octree: bool,
    /// Write leaf centers as a depth-colored PLY.
    #[arg(long)]
    leaf_centers: bool,
    /// Print a table of per-leaf statistics.
    #[arg(long)]
    leaf_stats: bool,
    /// Write (x, F(x)) pairs for this leaf as PLY.
    #[arg(long)]
    probe_warp: Option<usize>,
    #[arg(long, value_enum, default_value = "perspective")]
    warp: WarpArg,
    #[arg(long, default_value_t = 3.0)]
    lambda: f64,
    #[arg(long, default_value_t = 4)]
    n_c: usize,
    #[arg(long, default_value_t = 12)]
    max_depth: u32,
    #[arg(long, default_value_t = 16)]
    lattice: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

pub fn dump(args: DumpArgs) -> anyhow::Result<()> {
    let data = read_dataset(&args.dataset)?;
    std::fs::create_dir_all(&args.out)?;
    let cfg = SpaceConfig {
        lambda: args.lambda,
        n_c: args.n_c,
        max_depth: args.max_depth,
        lattice: args.lattice,
        warp_mode: match args.warp {
            WarpArg::Perspective => WarpMode::Perspective,
            WarpArg::None => WarpMode::None,
        },
        seed: args.seed,
    };
    let model = SpaceModel::build(&data.cameras, &cfg)?;
    if args.octree {
        std::fs::write(args.out.join("octree.json"), model.tree.to_json()?)?;
        println!("octree.json written");
    }
    if args.leaf_centers {
        std::fs::write(
            args.out.join("leaf_centers.ply"),
            model.tree.leaf_centers_ply(),
        )?;
        println!("leaf_centers.ply written");
    }
    if args.leaf_stats {
        println!("{:>6} {:>5} {:>12} {:>8} {:>8} {:>6}", "leaf", "depth", "side", "visible", "selected", "warped");
        for id in model.tree.leaf_ids() {
            let n = &model.tree.nodes[id];
            println!(
                "{:>6} {:>5} {:>12.4} {:>8} {:>8} {:>6}",
                id,
                n.depth,
                n.side,
                n.visible_cams.len(),
                n.selected_cams.len(),
                n.warp_id.is_some()
            );
        }
    }
    if let Some(leaf) = args.probe_warp {
        let node = model
            .tree
            .nodes
            .get(leaf)
            .ok_or_else(|| Error::InvalidArgument(format!("no node {leaf}")))?;
        let warp_id = node
            .warp_id
            .ok_or_else(|| Error::InvalidArgument(format!("leaf {leaf} has no warp")))?;
        let warp = &model.warps[warp_id];
        let mut rows = Vec::new();
        for x in sample_region_points(&node.aabb(), 16) {
            if let Ok(z) = warp.point(&x) {
                rows.push((x, z));
            }
        }
        let mut ply = String::new();
        ply.push_str("ply\nformat ascii 1.0\n");
        ply.push_str(&format!("element vertex {}\n", rows.len()));
        for name in ["x", "y", "z", "wx", "wy", "wz"] {
            ply.push_str(&format!("property double {name}\n"));
        }
        ply.push_str("end_header\n");
        for (x, z) in rows {
            ply.push_str(&format!("{} {} {} {} {} {}\n", x.x, x.y, x.z, z.x, z.y, z.z));
        }
        let path = args.out.join(format!("probe_warp_{leaf}.ply"));
        std::fs::write(&path, ply)?;
        println!("{} written", path.display());
    }
    Ok(())
}
