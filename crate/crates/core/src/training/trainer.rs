//! Edit-session setup and the joint training loop: renders the supervision
//! data once, then alternates a flow-only warmup with joint optimization
//! of the flow field and the invertible motion network.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::Point3;
use ndarray::{Array2, Array3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autodiff::{AdamState, Tape, TapeError, Var};
use crate::geometry::{Aabb, Camera};
use crate::localsurface::{LocalSurface, SurfaceFieldParams};
use crate::motion::{save_checkpoint, InvertibleMotionNet, SceneFlowField};
use crate::scenefield::{
    bilinear1, ray_profile, render_pixel, resolve_profile, DifferentiableField, DynamicField,
    FlowProvider, RenderSettings,
};

use super::losses::{
    loss_depth_consistency, loss_distill, loss_dynamic_photometric, loss_feature_photometric,
    loss_flow_regularizers, loss_laplacian, loss_motion_matching, loss_surface_flow,
    visible_vertices, DepthItem, FeatureLossMode, MotionRay, PhotoRay, SurfFlowItem,
};
use super::{
    sample_descriptor, FeatureProvider, FrameWindow, LossWeights, PatchFeatures, SurfSampleSet,
    TrainError,
};

/// Number of individually logged loss terms.
pub const N_LOSS_TERMS: usize = 10;

/// Everything configurable about a training session.
#[derive(Debug, Clone)]
pub struct SessionConfig {
    /// Iterations with only the scene-flow losses active.
    pub warmup_iters: usize,
    /// Joint iterations after warmup.
    pub joint_iters: usize,
    /// Rays drawn per iteration (capped by the frame's pool).
    pub ray_batch: usize,
    /// Subset of the ray batch re-rendered for the dynamic photometric
    /// loss; it is by far the most expensive term per ray.
    pub photo_rays: usize,
    /// Jittered copies of each vertex in the near-surface sample set.
    pub jitter_copies: usize,
    /// Near-surface sampling radius as a multiple of the shell width.
    pub surf_radius_factor: f64,
    pub learning_rate: f64,
    pub seed: u64,
    pub checkpoint_every: usize,
    pub weights: LossWeights,
    /// Occlusion guard of the descriptor-alignment loss.
    pub feature_eps: f64,
    pub feature_mode: FeatureLossMode,
    /// Ray samples for the depth/visibility maps (rendered jitter-free).
    pub depth_samples: usize,
    /// Pixels of padding around the tracked patch when pooling rays.
    pub pool_margin: i64,
    /// Visibility depth tolerance as a multiple of the shell width.
    pub visibility_tol_factor: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            warmup_iters: 2000,
            joint_iters: 1500,
            ray_batch: 1024,
            photo_rays: 64,
            jitter_copies: 4,
            surf_radius_factor: 4.0,
            learning_rate: 5e-4,
            seed: 7,
            checkpoint_every: 500,
            weights: LossWeights::default(),
            feature_eps: 0.5,
            feature_mode: FeatureLossMode::Cap,
            depth_samples: 2048,
            pool_margin: 4,
            visibility_tol_factor: 3.0,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.weights.validate()?;
        let bad = |msg: String| Err(TrainError::BadConfig(msg));
        if self.warmup_iters + self.joint_iters == 0 {
            return bad("schedule has zero iterations".into());
        }
        if self.ray_batch == 0 {
            return bad("ray_batch must be positive".into());
        }
        if self.photo_rays > self.ray_batch {
            return bad(format!(
                "photo_rays ({}) exceeds ray_batch ({})",
                self.photo_rays, self.ray_batch
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(self.feature_eps > 0.0 && self.feature_eps <= 1.0) {
            return bad(format!("feature_eps must lie in (0, 1], got {}", self.feature_eps));
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint_every must be positive".into());
        }
        if self.depth_samples < 16 {
            return bad("depth_samples must be at least 16".into());
        }
        if !(self.surf_radius_factor > 0.0 && self.surf_radius_factor.is_finite()) {
            return bad("surf_radius_factor must be positive".into());
        }
        if !(self.visibility_tol_factor > 0.0 && self.visibility_tol_factor.is_finite()) {
            return bad("visibility_tol_factor must be positive".into());
        }
        if self.pool_margin < 0 {
            return bad("pool_margin must be non-negative".into());
        }
        let w = &self.weights;
        let flow_active = [w.slow, w.smooth, w.cycle, w.dynamic_photometric, w.motion_matching]
            .iter()
            .any(|&l| l > 0.0);
        let any_active = flow_active
            || [w.distill, w.laplacian, w.feature_photometric, w.surface_flow, w.depth]
                .iter()
                .any(|&l| l > 0.0);
        if !any_active {
            return bad("every loss weight is zero".into());
        }
        if self.warmup_iters > 0 && !flow_active {
            return bad("warmup needs at least one positive flow-side weight".into());
        }
        Ok(())
    }
}

/// One tracked ray of one frame: where it looks, what it saw, and how the
/// scene says its content moves.
#[derive(Debug, Clone)]
struct PoolRay {
    pixel: [f64; 2],
    point: [f64; 3],
    gt_next: Option<[f64; 2]>,
    gt_prev: Option<[f64; 2]>,
    observed: [f64; 3],
    sample_points: Array2<f64>,
    deltas: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
struct FramePool {
    rays: Vec<PoolRay>,
}

/// A lifted edit bound to the scene it came from, with all per-frame
/// supervision data precomputed: rendered depth and feature maps, and a
/// pool of rays tracking the patch through the sequence.
pub struct EditSession<'a> {
    pub field: &'a dyn DifferentiableField,
    pub flow_gt: &'a (dyn FlowProvider + Sync),
    pub camera: Camera,
    pub render: RenderSettings,
    pub config: SessionConfig,
    pub n_frames: usize,
    pub ref_frame: usize,
    /// Shell width the surface will be rendered with; sets the sampling
    /// radius and depth tolerances.
    pub beta: f64,
    pub ref_vertices: Array2<f64>,
    pub neighbors: Vec<Vec<usize>>,
    pub ref_descriptors: Array2<f64>,
    pub depth_maps: Vec<Array2<f64>>,
    pub depth_valid: Vec<Array2<bool>>,
    pub feature_maps: Vec<Arc<Array3<f64>>>,
    pools: Vec<FramePool>,
}

impl<'a> EditSession<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        field: &'a dyn DifferentiableField,
        flow_gt: &'a (dyn FlowProvider + Sync),
        camera: Camera,
        surface: &LocalSurface,
        ref_frame: usize,
        n_frames: usize,
        render: RenderSettings,
        params: SurfaceFieldParams,
        config: SessionConfig,
    ) -> Result<Self, TrainError> {
        config.validate()?;
        if n_frames < 2 {
            return Err(TrainError::BadConfig(format!(
                "need at least two frames, got {n_frames}"
            )));
        }
        if ref_frame >= n_frames {
            return Err(TrainError::BadConfig(format!(
                "reference frame {ref_frame} outside the {n_frames}-frame sequence"
            )));
        }
        let k = surface.mesh.vertices.len();
        if k == 0 {
            return Err(TrainError::EmptySamples);
        }
        assert_eq!(surface.source_pixels.len(), k);
        let ref_vertices = Array2::from_shape_fn((k, 3), |(i, c)| surface.mesh.vertices[i][c]);
        let neighbors = surface.mesh.vertex_neighbors();
        for (i, n) in neighbors.iter().enumerate() {
            if n.is_empty() {
                return Err(TrainError::IsolatedVertex(i));
            }
        }

        let dt = 1.0 / (n_frames - 1) as f64;
        let times: Vec<f64> = (0..n_frames).map(|i| i as f64 * dt).collect();
        let dyn_field = field.as_dynamic();

        // Depth and validity of the underlying field, rendered jitter-free
        // and finely enough that surface depths are trustworthy.
        let depth_settings = RenderSettings {
            n_samples: config.depth_samples,
            jitter: false,
            ..render
        };
        let mut depth_maps = Vec::with_capacity(n_frames);
        let mut depth_valid = Vec::with_capacity(n_frames);
        for &t in &times {
            let (d, v) = depth_and_validity(dyn_field, &camera, t, &depth_settings);
            depth_maps.push(d);
            depth_valid.push(v);
        }

        // Per-frame descriptor maps of the unedited renders; the surface
        // tracks the underlying content, so descriptors come from the
        // original appearance, not the edit.
        let extractor = PatchFeatures::default();
        let feature_maps: Vec<Arc<Array3<f64>>> = times
            .iter()
            .map(|&t| {
                let frame = crate::scenefield::render_image(dyn_field, &camera, t, &render);
                Arc::new(extractor.extract(&frame.color))
            })
            .collect();

        let ref_descriptors = {
            let map = feature_maps[ref_frame].view();
            let d = extractor.dim();
            let mut out = Array2::zeros((k, d));
            for (i, pix) in surface.source_pixels.iter().enumerate() {
                let desc = sample_descriptor(map, *pix);
                for (c, v) in desc.iter().enumerate() {
                    out[[i, c]] = *v;
                }
            }
            out
        };

        let mut pools = Vec::with_capacity(n_frames);
        for (i, &t) in times.iter().enumerate() {
            let pool = build_pool(
                dyn_field,
                flow_gt,
                &camera,
                &render,
                surface,
                times[ref_frame],
                i,
                t,
                dt,
                n_frames,
                config.pool_margin,
            )?;
            if pool.rays.is_empty() {
                return Err(TrainError::NoValidRays);
            }
            pools.push(pool);
        }

        Ok(EditSession {
            field,
            flow_gt,
            camera,
            render,
            config,
            n_frames,
            ref_frame,
            beta: params.beta,
            ref_vertices,
            neighbors,
            ref_descriptors,
            depth_maps,
            depth_valid,
            feature_maps,
            pools,
        })
    }

    pub fn frame_time(&self, i: usize) -> f64 {
        i as f64 / (self.n_frames - 1) as f64
    }

    /// Rays pooled for a frame; exposed for tests and diagnostics.
    pub fn pool_size(&self, frame: usize) -> usize {
        self.pools[frame].rays.len()
    }
}

/// Loss values of one iteration, in [`LossWeights::named`] order, plus the
/// weighted total. Terms whose weight is zero are logged as 0.
#[derive(Debug, Clone, Copy)]
pub struct LossRow {
    pub iteration: usize,
    pub terms: [f64; N_LOSS_TERMS],
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct CheckpointInfo {
    pub iteration: usize,
    /// Worst round-trip error of the motion network at this checkpoint.
    pub cycle_error: f64,
    pub path: Option<PathBuf>,
}

pub struct TrainOutcome {
    pub flow: SceneFlowField,
    pub net: InvertibleMotionNet,
    pub rows: Vec<LossRow>,
    pub checkpoints: Vec<CheckpointInfo>,
    /// Reference vertices carried to every frame by the trained network.
    pub trajectory: Vec<Array2<f64>>,
}

/// Runs the configured schedule. With an output directory, loss curves
/// land in `losses.csv` and checkpoints in `ckpt_*` there.
pub fn train(session: &EditSession, out_dir: Option<&Path>) -> Result<TrainOutcome, TrainError> {
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
    }
    let cfg = &session.config;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut flow = SceneFlowField::new(cfg.seed);
    let mut net = InvertibleMotionNet::new(cfg.seed.wrapping_add(1));
    let mut adam = {
        let mut params = flow.params();
        params.extend(net.params());
        AdamState::new(cfg.learning_rate, &params)
    };

    let total_iters = cfg.warmup_iters + cfg.joint_iters;
    let mut rows = Vec::with_capacity(total_iters);
    let mut checkpoints = Vec::new();
    let r_surf = cfg.surf_radius_factor * session.beta;
    let vis_tol = cfg.visibility_tol_factor * session.beta;
    let t_ref = session.frame_time(session.ref_frame);

    for it in 0..total_iters {
        let weights = if it < cfg.warmup_iters {
            cfg.weights.flow_only()
        } else {
            cfg.weights
        };
        let frame = rng.gen_range(0..session.n_frames);
        let win = FrameWindow::at_frame(frame, session.n_frames);
        let pool = &session.pools[frame];
        let take = cfg.ray_batch.min(pool.rays.len());
        let chosen = rand::seq::index::sample(&mut rng, pool.rays.len(), take).into_vec();

        let verts_now = net.warp(&session.ref_vertices, t_ref, win.t);
        let samples = SurfSampleSet::around_vertices(
            &verts_now,
            win.t,
            cfg.jitter_copies,
            r_surf,
            &mut rng,
        )?;

        let step = run_iteration(
            session, &mut flow, &mut net, &mut adam, &weights, &win, frame, &chosen, &samples,
            &verts_now, t_ref, vis_tol,
        );
        let (terms, total) = match step {
            Ok(v) => v,
            Err(TrainError::Tape(TapeError::NonFinite { op })) => {
                return Err(TrainError::Diverged {
                    iteration: it,
                    detail: format!("non-finite value in {op}"),
                })
            }
            Err(e) => return Err(e),
        };
        if !total.is_finite() {
            return Err(TrainError::Diverged {
                iteration: it,
                detail: format!("total loss {total}"),
            });
        }
        rows.push(LossRow {
            iteration: it,
            terms,
            total,
        });

        if (it + 1) % cfg.checkpoint_every == 0 || it + 1 == total_iters {
            let cycle_error = measure_cycle(&net, &session.ref_vertices, cfg.seed ^ it as u64);
            let path = match out_dir {
                Some(dir) => {
                    let base = dir.join(format!("ckpt_{:05}", it + 1));
                    let mut named = flow.named_params();
                    named.extend(net.named_params());
                    save_checkpoint(&base, &named)?;
                    Some(base)
                }
                None => None,
            };
            checkpoints.push(CheckpointInfo {
                iteration: it + 1,
                cycle_error,
                path,
            });
        }
    }

    if let Some(dir) = out_dir {
        write_loss_csv(&dir.join("losses.csv"), &rows)?;
        let base = dir.join("ckpt_final");
        let mut named = flow.named_params();
        named.extend(net.named_params());
        save_checkpoint(&base, &named)?;
    }

    let trajectory = (0..session.n_frames)
        .map(|i| net.warp(&session.ref_vertices, t_ref, session.frame_time(i)))
        .collect();
    Ok(TrainOutcome {
        flow,
        net,
        rows,
        checkpoints,
        trajectory,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_iteration(
    session: &EditSession,
    flow: &mut SceneFlowField,
    net: &mut InvertibleMotionNet,
    adam: &mut AdamState,
    weights: &LossWeights,
    win: &FrameWindow,
    frame: usize,
    chosen: &[usize],
    samples: &SurfSampleSet,
    verts_now: &Array2<f64>,
    t_ref: f64,
    vis_tol: f64,
) -> Result<([f64; N_LOSS_TERMS], f64), TrainError> {
    let cfg = &session.config;
    let pool = &session.pools[frame];
    let mut tape = Tape::new();
    let fvars = flow.register(&mut tape);
    let nvars = net.register(&mut tape);

    let mut terms = [0.0; N_LOSS_TERMS];
    let mut active: Vec<(Var, f64)> = Vec::new();
    let mut record = |tape: &Tape, slot: usize, v: Var, lambda: f64, list: &mut Vec<(Var, f64)>| {
        let val = tape
            .scalar_value(v)
            .expect("losses are scalars");
        terms[slot] = val;
        list.push((v, lambda));
        Ok::<(), TrainError>(())
    };

    if weights.slow > 0.0 || weights.smooth > 0.0 || weights.cycle > 0.0 {
        let (slow, smooth, cycle) =
            loss_flow_regularizers(&mut tape, flow, &fvars, &samples.points, win)?;
        if weights.slow > 0.0 {
            record(&tape, 0, slow, weights.slow, &mut active)?;
        }
        if weights.smooth > 0.0 {
            record(&tape, 1, smooth, weights.smooth, &mut active)?;
        }
        if weights.cycle > 0.0 {
            record(&tape, 2, cycle, weights.cycle, &mut active)?;
        }
    }

    if weights.dynamic_photometric > 0.0 && !chosen.is_empty() {
        let photo: Vec<PhotoRay> = chosen
            .iter()
            .take(cfg.photo_rays)
            .map(|&i| {
                let r = &pool.rays[i];
                PhotoRay {
                    points: r.sample_points.clone(),
                    deltas: r.deltas.clone(),
                    observed: r.observed,
                }
            })
            .collect();
        let pho = loss_dynamic_photometric(
            &mut tape,
            flow,
            &fvars,
            session.field,
            &photo,
            session.render.background,
            win,
        )?;
        record(&tape, 3, pho, weights.dynamic_photometric, &mut active)?;
    }

    if weights.motion_matching > 0.0 && !chosen.is_empty() {
        let rays: Vec<MotionRay> = chosen
            .iter()
            .map(|&i| {
                let r = &pool.rays[i];
                MotionRay {
                    pixel: r.pixel,
                    point: r.point,
                    gt_next: r.gt_next,
                    gt_prev: r.gt_prev,
                }
            })
            .collect();
        let motion =
            loss_motion_matching(&mut tape, flow, &fvars, &session.camera, &rays, win)?;
        record(&tape, 4, motion, weights.motion_matching, &mut active)?;
    }

    if weights.distill > 0.0 {
        let teacher = flow.query_batch(&samples.points, samples.time);
        let distill = loss_distill(&mut tape, net, &nvars, samples, &teacher, win)?;
        record(&tape, 5, distill, weights.distill, &mut active)?;
    }

    if weights.laplacian > 0.0 {
        let verts_const = tape.constant(session.ref_vertices.clone().into_dyn())?;
        let warped = net.warp_tape(&mut tape, verts_const, t_ref, win.t, &nvars)?;
        let lap = loss_laplacian(&mut tape, warped, &session.neighbors)?;
        record(&tape, 6, lap, weights.laplacian, &mut active)?;
    }

    if weights.feature_photometric > 0.0 {
        let views = [(
            session.camera.clone(),
            session.feature_maps[frame].clone(),
        )];
        match loss_feature_photometric(
            &mut tape,
            net,
            &nvars,
            &session.ref_vertices,
            &session.ref_descriptors,
            t_ref,
            win.t,
            &views,
            cfg.feature_eps,
            cfg.feature_mode,
        ) {
            Ok(fp) => record(&tape, 7, fp, weights.feature_photometric, &mut active)?,
            // A frame the patch has entirely left supplies no descriptor
            // signal; other frames still do.
            Err(TrainError::NoProjectedVertices) => {}
            Err(e) => return Err(e),
        }
    }

    let needs_vis = weights.surface_flow > 0.0 || weights.depth > 0.0;
    if needs_vis {
        let vis = visible_vertices(verts_now, &session.camera, &session.depth_maps[frame], vis_tol);
        let mut surf_items = Vec::new();
        let mut depth_items = Vec::new();
        for (k, &v) in vis.iter().enumerate() {
            if !v {
                continue;
            }
            let p = Point3::new(verts_now[[k, 0]], verts_now[[k, 1]], verts_now[[k, 2]]);
            let Ok((pix, _z)) = session.camera.project(&p) else {
                continue;
            };
            if weights.surface_flow > 0.0 {
                let gt_next = win
                    .has_next
                    .then(|| session.flow_gt.flow(pix, win.t, win.t + win.dt))
                    .flatten();
                let gt_prev = win
                    .has_prev
                    .then(|| session.flow_gt.flow(pix, win.t, win.t - win.dt))
                    .flatten();
                if gt_next.is_some() || gt_prev.is_some() {
                    surf_items.push(SurfFlowItem {
                        vertex: k,
                        gt_next,
                        gt_prev,
                    });
                }
            }
            if weights.depth > 0.0 {
                let valid = &session.depth_valid[frame];
                let (h, w) = valid.dim();
                let xi = (pix[0].round() as i64).clamp(0, w as i64 - 1) as usize;
                let yi = (pix[1].round() as i64).clamp(0, h as i64 - 1) as usize;
                if valid[[yi, xi]] {
                    depth_items.push(DepthItem {
                        vertex: k,
                        field_depth: bilinear1(
                            &session.depth_maps[frame].view(),
                            pix[0],
                            pix[1],
                        ),
                    });
                }
            }
        }
        if weights.surface_flow > 0.0 {
            let surf = loss_surface_flow(
                &mut tape,
                net,
                &nvars,
                &session.ref_vertices,
                t_ref,
                &session.camera,
                &surf_items,
                win,
            )?;
            record(&tape, 8, surf, weights.surface_flow, &mut active)?;
        }
        if weights.depth > 0.0 {
            let depth = loss_depth_consistency(
                &mut tape,
                net,
                &nvars,
                &session.ref_vertices,
                t_ref,
                win.t,
                &session.camera,
                &depth_items,
            )?;
            record(&tape, 9, depth, weights.depth, &mut active)?;
        }
    }

    let mut total: Option<Var> = None;
    for (v, lambda) in &active {
        let weighted = tape.mul_scalar(*v, *lambda)?;
        total = Some(match total {
            Some(t) => tape.add(t, weighted)?,
            None => weighted,
        });
    }
    let total = total.ok_or_else(|| TrainError::BadConfig("no active loss this iteration".into()))?;
    let total_val = tape.scalar_value(total)?;
    let grads = tape.backward(total)?;
    let grad_values: Vec<ndarray::ArrayD<f64>> = fvars
        .iter()
        .chain(nvars.iter())
        .map(|v| grads.grad(*v))
        .collect();
    let mut params = flow.params_mut();
    params.extend(net.params_mut());
    adam.step(&mut params, &grad_values)?;
    Ok((terms, total_val))
}

/// Worst round-trip error of the warp over random points near the surface
/// and random time pairs; exact inversion keeps this at float noise no
/// matter the parameters.
fn measure_cycle(net: &InvertibleMotionNet, ref_vertices: &Array2<f64>, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = vertex_aabb(ref_vertices);
    let n = 256;
    let pts = Array2::from_shape_fn((n, 3), |(_, c)| {
        rng.gen_range(bounds.min[c] - 0.25..=bounds.max[c] + 0.25)
    });
    let t0 = rng.gen_range(0.0..=1.0);
    let t1 = rng.gen_range(0.0..=1.0);
    let there = net.warp(&pts, t0, t1);
    let back = net.warp(&there, t1, t0);
    let mut worst = 0.0f64;
    for i in 0..n {
        let e = (0..3)
            .map(|c| (back[[i, c]] - pts[[i, c]]).powi(2))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(e);
    }
    worst
}

fn vertex_aabb(verts: &Array2<f64>) -> Aabb {
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    for row in verts.outer_iter() {
        for c in 0..3 {
            min[c] = min[c].min(row[c]);
            max[c] = max[c].max(row[c]);
        }
    }
    Aabb::new(
        Point3::new(min[0], min[1], min[2]),
        Point3::new(max[0], max[1], max[2]),
    )
}

fn write_loss_csv(path: &Path, rows: &[LossRow]) -> Result<(), TrainError> {
    let mut out = String::new();
    out.push_str("iteration");
    for (name, _) in LossWeights::default().named() {
        out.push(',');
        out.push_str(name);
    }
    out.push_str(",total\n");
    for row in rows {
        out.push_str(&row.iteration.to_string());
        for v in row.terms {
            out.push(',');
            out.push_str(&format!("{v:.9e}"));
        }
        out.push_str(&format!(",{:.9e}\n", row.total));
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Renders depth and a per-pixel reliability flag (enough accumulated
/// weight that the depth is a surface, not the far-plane fallback).
fn depth_and_validity(
    field: &dyn DynamicField,
    camera: &Camera,
    t: f64,
    settings: &RenderSettings,
) -> (Array2<f64>, Array2<bool>) {
    let (w, h) = (camera.width, camera.height);
    let rows: Vec<Vec<(f64, bool)>> = (0..h as u32)
        .into_par_iter()
        .map(|py| {
            (0..w as u32)
                .map(|px| {
                    let s = render_pixel(field, camera, px, py, t, settings);
                    (s.depth, s.weight_sum >= 0.5)
                })
                .collect()
        })
        .collect();
    let mut depth = Array2::zeros((h, w));
    let mut valid = Array2::from_elem((h, w), false);
    for (y, row) in rows.iter().enumerate() {
        for (x, &(d, v)) in row.iter().enumerate() {
            depth[[y, x]] = d;
            valid[[y, x]] = v;
        }
    }
    (depth, valid)
}

/// Pools the rays of one frame: the reference patch's pixels carried to
/// the frame by ground-truth flow, padded by `margin`, keeping rays whose
/// expected point is surface-dominated and that have flow supervision.
#[allow(clippy::too_many_arguments)]
fn build_pool(
    field: &dyn DynamicField,
    flow_gt: &(dyn FlowProvider + Sync),
    camera: &Camera,
    render: &RenderSettings,
    surface: &LocalSurface,
    t_ref: f64,
    frame: usize,
    t: f64,
    dt: f64,
    n_frames: usize,
    margin: i64,
) -> Result<FramePool, TrainError> {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let mut any = false;
    for sp in &surface.source_pixels {
        let here = if (t - t_ref).abs() < 1e-12 {
            Some(*sp)
        } else {
            flow_gt
                .flow(*sp, t_ref, t)
                .map(|f| [sp[0] + f[0], sp[1] + f[1]])
        };
        if let Some(p) = here {
            any = true;
            for c in 0..2 {
                lo[c] = lo[c].min(p[c]);
                hi[c] = hi[c].max(p[c]);
            }
        }
    }
    if !any {
        return Ok(FramePool::default());
    }
    let (w, h) = (camera.width as i64, camera.height as i64);
    let x0 = ((lo[0].floor() as i64) - margin).clamp(0, w - 1);
    let x1 = ((hi[0].ceil() as i64) + margin).clamp(0, w - 1);
    let y0 = ((lo[1].floor() as i64) - margin).clamp(0, h - 1);
    let y1 = ((hi[1].ceil() as i64) + margin).clamp(0, h - 1);

    let mut rays = Vec::new();
    for py in y0..=y1 {
        for px in x0..=x1 {
            let profile = ray_profile(field, camera, px as u32, py as u32, t, render);
            let sample = resolve_profile(&profile, render);
            if sample.weight_sum < 0.5 {
                continue;
            }
            let mut point = [0.0; 3];
            for (wgt, p) in profile.weights.iter().zip(&profile.points) {
                for c in 0..3 {
                    point[c] += wgt * p[c];
                }
            }
            for c in &mut point {
                *c /= sample.weight_sum;
            }
            let pixel = [px as f64, py as f64];
            let gt_next = (frame + 1 < n_frames)
                .then(|| flow_gt.flow(pixel, t, t + dt))
                .flatten();
            let gt_prev = (frame > 0).then(|| flow_gt.flow(pixel, t, t - dt)).flatten();
            if gt_next.is_none() && gt_prev.is_none() {
                continue;
            }
            let s = profile.points.len();
            let sample_points =
                Array2::from_shape_fn((s, 3), |(i, c)| profile.points[i][c]);
            rays.push(PoolRay {
                pixel,
                point,
                gt_next,
                gt_prev,
                observed: sample.color,
                sample_points,
                deltas: profile.deltas.clone(),
            });
        }
    }
    Ok(FramePool { rays })
}
