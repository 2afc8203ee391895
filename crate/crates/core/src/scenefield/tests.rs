use approx::{assert_abs_diff_eq, assert_relative_eq};
use nalgebra::{Matrix4, Point3, Vector3};
use ndarray::Array3;
use rand::Rng;

use super::*;
use crate::geometry::{Aabb, Camera};

/// Constant-density slab between two camera depths, for quadrature
/// oracles.
struct ConstSlab {
    z0: f64,
    z1: f64,
    sigma: f64,
    color: [f64; 3],
}

impl DynamicField for ConstSlab {
    fn query(&self, x: &Point3<f64>, _t: f64) -> (f64, [f64; 3]) {
        if x.z >= self.z0 && x.z < self.z1 {
            (self.sigma, self.color)
        } else {
            (0.0, [0.0; 3])
        }
    }

    fn bounds(&self) -> Aabb {
        Aabb::new(
            Point3::new(-10.0, -10.0, self.z0),
            Point3::new(10.0, 10.0, self.z1),
        )
    }
}

fn axis_camera(width: usize, height: usize) -> Camera {
    // Identity pose: camera at the origin looking along +z. Odd image
    // sizes put the central pixel exactly on the optical axis.
    Camera::new(
        width,
        height,
        50.0,
        50.0,
        (width as f64 - 1.0) / 2.0,
        (height as f64 - 1.0) / 2.0,
        Matrix4::identity(),
    )
    .unwrap()
}

#[test]
fn slab_transmittance_matches_closed_form() {
    // Slab edges aligned with stratum boundaries and midpoint sampling
    // make the quadrature exact: N = 256 over [1, 3] gives stratum width
    // 1/128, and the slab [1.5, 2.0] spans strata 64..128 exactly.
    let slab = ConstSlab {
        z0: 1.5,
        z1: 2.0,
        sigma: 2.0,
        color: [1.0, 0.0, 0.0],
    };
    let cam = axis_camera(9, 9);
    let settings = RenderSettings {
        n_samples: 256,
        jitter: false,
        near: 1.0,
        far: 3.0,
        ..Default::default()
    };
    // Central pixel: the ray is the optical axis, so ray distance equals
    // camera depth.
    let s = render_pixel(&slab, &cam, 4, 4, 0.0, &settings);
    let expected = (-slab.sigma * (slab.z1 - slab.z0)).exp();
    assert_abs_diff_eq!(s.transmittance, expected, epsilon = 1e-3);
    assert_abs_diff_eq!(s.weight_sum, 1.0 - expected, epsilon = 1e-3);
}

#[test]
fn slab_transmittance_exact_under_midpoint_alignment() {
    // Same setup; the aligned case is not merely within tolerance, it is
    // exact to rounding.
    let slab = ConstSlab {
        z0: 1.5,
        z1: 2.0,
        sigma: 2.0,
        color: [1.0, 0.0, 0.0],
    };
    let cam = axis_camera(9, 9);
    let settings = RenderSettings {
        n_samples: 256,
        jitter: false,
        near: 1.0,
        far: 3.0,
        ..Default::default()
    };
    let s = render_pixel(&slab, &cam, 4, 4, 0.0, &settings);
    assert_abs_diff_eq!(s.transmittance, (-1.0f64).exp(), epsilon = 1e-12);
}

#[test]
fn weights_and_transmittance_telescope_to_one() {
    let field = GaussianBlobField::demo();
    let cam = AnalyticScene::default_camera(16, 16);
    let settings = RenderSettings::default();
    for (px, py) in [(0u32, 0u32), (7, 9), (15, 3), (8, 8)] {
        let p = ray_profile(&field, &cam, px, py, 0.3, &settings);
        let total: f64 = p.weights.iter().sum();
        assert!(p.weights.iter().all(|&w| w >= 0.0));
        assert_abs_diff_eq!(total + p.transmittance, 1.0, epsilon = 1e-9);
    }
}

#[test]
fn empty_field_renders_background() {
    struct Vacuum;
    impl DynamicField for Vacuum {
        fn query(&self, _x: &Point3<f64>, _t: f64) -> (f64, [f64; 3]) {
            (0.0, [0.0; 3])
        }
        fn bounds(&self) -> Aabb {
            Aabb::new(Point3::new(-1.0, -1.0, -1.0), Point3::new(1.0, 1.0, 1.0))
        }
    }
    let cam = AnalyticScene::default_camera(8, 8);
    let settings = RenderSettings {
        background: [0.25, 0.5, 0.75],
        ..Default::default()
    };
    let s = render_pixel(&Vacuum, &cam, 3, 5, 0.0, &settings);
    assert_eq!(s.color, [0.25, 0.5, 0.75]);
    assert_eq!(s.weight_sum, 0.0);
    assert_eq!(s.transmittance, 1.0);
}

#[test]
fn render_is_deterministic_and_seed_sensitive() {
    let scene = AnalyticScene::new(SceneKind::PlaneTranslation, Texture::checker(8));
    let cam = AnalyticScene::default_camera(24, 24);
    let settings = RenderSettings::default();
    let a = render_image(&scene, &cam, 0.4, &settings);
    let b = render_image(&scene, &cam, 0.4, &settings);
    assert_eq!(a.color, b.color, "same seed must be bit-identical");
    assert_eq!(a.depth, b.depth);

    let other = RenderSettings {
        seed: 1,
        ..settings
    };
    let c = render_image(&scene, &cam, 0.4, &other);
    assert_ne!(a.color, c.color, "different seed should move samples");
}

#[test]
fn parallel_render_matches_serial_loop() {
    let scene = AnalyticScene::new(SceneKind::TwoPartArticulated, Texture::checker(6));
    let cam = AnalyticScene::default_camera(16, 12);
    let settings = RenderSettings::default();
    let img = render_image(&scene, &cam, 0.7, &settings);
    for py in 0..12u32 {
        for px in 0..16u32 {
            let s = render_pixel(&scene, &cam, px, py, 0.7, &settings);
            for k in 0..3 {
                assert_eq!(img.color[[py as usize, px as usize, k]], s.color[k]);
            }
            assert_eq!(img.depth[[py as usize, px as usize]], s.depth);
        }
    }
}

#[test]
fn ray_rng_depends_on_pixel_not_scene() {
    let mut a = ray_rng(7, 3, 4);
    let mut b = ray_rng(7, 3, 4);
    assert_eq!(a.gen::<u64>(), b.gen::<u64>());
    let mut c = ray_rng(7, 4, 3);
    assert_ne!(ray_rng(7, 3, 4).gen::<u64>(), c.gen::<u64>());
    let mut d = ray_rng(8, 3, 4);
    assert_ne!(ray_rng(7, 3, 4).gen::<u64>(), d.gen::<u64>());
}

#[test]
fn solid_slab_depth_hits_front_face() {
    let scene = AnalyticScene::new(SceneKind::PlaneTranslation, Texture::checker(8));
    let cam = AnalyticScene::default_camera(33, 33);
    let settings = RenderSettings {
        n_samples: 512,
        depth_mode: DepthMode::MedianTermination,
        ..Default::default()
    };
    // Central pixel at t = 0 sees the slab front face at z = 0.45, which
    // is depth 2.65 from the camera at z = -2.2.
    let s = render_pixel(&scene, &cam, 16, 16, 0.0, &settings);
    assert_abs_diff_eq!(s.depth, 2.65, epsilon = 0.02);
    let e = render_pixel(
        &scene,
        &cam,
        16,
        16,
        0.0,
        &RenderSettings {
            n_samples: 512,
            ..Default::default()
        },
    );
    assert_abs_diff_eq!(e.depth, 2.65, epsilon = 0.02);
    assert!(s.weight_sum > 0.99, "solid slab should absorb the ray");
}

#[test]
fn plane_translation_flow_matches_closed_form() {
    let scene = AnalyticScene::new(SceneKind::PlaneTranslation, Texture::checker(8));
    let cam = AnalyticScene::default_camera(33, 33);
    let provider = AnalyticFlow {
        scene: &scene,
        camera: &cam,
    };
    // The slab translates by (0.25, 0.125, 0) per unit time, parallel to
    // the image plane at front-face depth 2.65, so over dt = 0.5 the
    // pixel motion has magnitude f * (0.125, 0.0625) / 2.65. Looking
    // from -z toward +z with image y down, both image axes run opposite
    // to the world axes, so the flow is negative.
    let f = cam.fx;
    let flow = provider.flow([16.0, 16.0], 0.0, 0.5).unwrap();
    assert_relative_eq!(flow[0], -f * 0.125 / 2.65, epsilon = 1e-9);
    assert_relative_eq!(flow[1], -f * 0.0625 / 2.65, epsilon = 1e-9);
    // A ray past the slab sees background.
    assert!(provider.flow([0.0, 0.0], 0.0, 0.5).is_none());
}

#[test]
fn deform_is_rigid_and_invertible() {
    for kind in [
        SceneKind::PlaneTranslation,
        SceneKind::PlaneRigid,
        SceneKind::OrbitingSphere,
        SceneKind::TwoPartArticulated,
    ] {
        let scene = AnalyticScene::new(kind, Texture::checker(4));
        for (i, part) in scene.parts.iter().enumerate() {
            let probe = match &part.shape {
                Shape::Slab { center, .. } => *center,
                Shape::Sphere { center, .. } => *center,
            };
            assert_eq!(scene.part_containing(&probe, 0.0), Some(i));
            let moved = scene.deform(&probe, 0.0, 0.8);
            let back = scene.deform(&moved, 0.8, 0.0);
            assert_relative_eq!(probe, back, epsilon = 1e-12);
            // Rigidity: distances to a nearby point are preserved.
            let q = probe + Vector3::new(0.03, -0.02, 0.01);
            let moved_q = {
                let p = &scene.parts[i];
                let local = p.motion.pose(0.0).inverse_transform_point(&q);
                p.motion.pose(0.8).transform_point(&local)
            };
            assert_relative_eq!((moved - moved_q).norm(), (probe - q).norm(), epsilon = 1e-12);
        }
    }
}

#[test]
fn orbiting_sphere_occludes_center_only_near_t0() {
    let scene = AnalyticScene::new(SceneKind::OrbitingSphere, Texture::checker(8));
    let cam = AnalyticScene::default_camera(33, 33);
    let settings = RenderSettings {
        n_samples: 512,
        ..Default::default()
    };
    // t = 0: sphere sits on the optical axis at z = -0.15; depth from
    // the camera is about 2.05 - 0.25 = 1.8 at the near surface.
    let blocked = render_pixel(&scene, &cam, 16, 16, 0.0, &settings);
    assert!(blocked.depth < 2.2, "sphere should be in front");
    // t = 0.25: sphere has swung to the side; the backdrop at depth
    // 2.2 + 0.8 = 3.0 shows through.
    let open = render_pixel(&scene, &cam, 16, 16, 0.25, &settings);
    assert!(open.depth > 2.8, "backdrop should be visible");
}

#[test]
fn raycast_agrees_with_rendered_depth() {
    let scene = AnalyticScene::new(SceneKind::PlaneRigid, Texture::checker(8));
    let cam = AnalyticScene::default_camera(33, 33);
    let ray = cam.ray_through([16.0, 16.0]);
    let (part, t_hit) = scene.raycast(&ray, 0.3).unwrap();
    assert_eq!(part, 0);
    let depth = cam.zdepth(&ray.at(t_hit));
    let settings = RenderSettings {
        n_samples: 1024,
        depth_mode: DepthMode::MedianTermination,
        ..Default::default()
    };
    let s = render_pixel(&scene, &cam, 16, 16, 0.3, &settings);
    assert_abs_diff_eq!(s.depth, depth, epsilon = 0.01);
}

#[test]
fn checker_texture_alternates() {
    let t = Texture::checker(4);
    assert_eq!(t.sample(0.05, 0.05), [0.9, 0.9, 0.9]);
    assert_eq!(t.sample(0.3, 0.05), [0.1, 0.1, 0.1]);
    assert_eq!(t.sample(0.3, 0.3), [0.9, 0.9, 0.9]);
    // u = v = 1 clamps into the last cell instead of indexing out.
    let _ = t.sample(1.0, 1.0);
}

#[test]
fn image_texture_interpolates_grid_points_exactly() {
    let mut map = Array3::zeros((3, 4, 3));
    for y in 0..3 {
        for x in 0..4 {
            for c in 0..3 {
                map[[y, x, c]] = (y * 4 + x) as f64 + c as f64 * 0.1;
            }
        }
    }
    let tex = Texture::Image(map.clone());
    // uv hitting exact grid points returns stored values.
    for y in 0..3 {
        for x in 0..4 {
            let u = x as f64 / 3.0;
            let v = y as f64 / 2.0;
            let got = tex.sample(u, v);
            for c in 0..3 {
                assert_abs_diff_eq!(got[c], map[[y, x, c]], epsilon = 1e-12);
            }
        }
    }
    // Midpoint between two horizontal neighbours is their average.
    let mid = bilinear3(&map.view(), 0.5, 0.0);
    assert_abs_diff_eq!(mid[0], 0.5, epsilon = 1e-12);
}

#[test]
fn blob_field_matches_closed_form_density() {
    let field = GaussianBlobField::demo();
    let b = &field.blobs[0];
    let (d, _) = field.query(&b.center, 0.0);
    // At blob 0's center the other blobs contribute a little; the value
    // must be at least the blob's own amplitude.
    assert!(d >= b.amplitude);
    let far = Point3::new(5.0, 5.0, 5.0);
    let (d_far, _) = field.query(&far, 0.0);
    assert!(d_far < 1e-6);
    // Smooth drift: density at the moved center stays at the peak value.
    let c_later = b.center + b.velocity * 0.5;
    let (d_later, _) = field.query(&c_later, 0.5);
    assert!(d_later >= b.amplitude);
}

#[test]
fn deltas_cover_range_exactly() {
    let settings = RenderSettings {
        n_samples: 32,
        jitter: true,
        seed: 3,
        near: 0.5,
        far: 2.5,
        ..Default::default()
    };
    let mut rng = ray_rng(settings.seed, 1, 2);
    let ts = stratified_ts(&settings, &mut rng);
    assert_eq!(ts.len(), 32);
    for (i, &t) in ts.iter().enumerate() {
        let w = 2.0 / 32.0;
        assert!(t >= 0.5 + i as f64 * w && t < 0.5 + (i as f64 + 1.0) * w);
    }
    let deltas = deltas_from_ts(&ts, settings.far);
    let total: f64 = deltas.iter().sum();
    assert_abs_diff_eq!(total, settings.far - ts[0], epsilon = 1e-12);
}
