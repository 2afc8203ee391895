use nalgebra::{Point3, Vector3};
use ndarray::{Array2, Array3};

use super::*;
use crate::geometry::{Aabb, Camera, Ray, TriMesh};
use crate::scenefield::{
    render_image, render_pixel, DynamicField, RenderSettings, SOLID_DENSITY,
};

/// Camera on the -z axis looking toward +z; image-right is world -x and
/// image-down is world -y.
fn cam(w: usize, h: usize, focal: f64) -> Camera {
    Camera::look_at(
        w,
        h,
        focal,
        Point3::new(0.0, 0.0, -2.2),
        Point3::new(0.0, 0.0, 1.0),
        Vector3::new(0.0, -1.0, 0.0),
    )
    .unwrap()
}

fn wide_bounds() -> Aabb {
    Aabb::new(Point3::new(-3.0, -3.0, -0.5), Point3::new(3.0, 3.0, 3.0))
}

/// Constant-color solid slab in a z-range, covering all x, y.
struct TestSlab {
    z0: f64,
    z1: f64,
    color: [f64; 3],
}

impl DynamicField for TestSlab {
    fn query(&self, x: &Point3<f64>, _t: f64) -> (f64, [f64; 3]) {
        if x.z >= self.z0 && x.z <= self.z1 {
            (SOLID_DENSITY, self.color)
        } else {
            (0.0, [0.0; 3])
        }
    }
    fn bounds(&self) -> Aabb {
        wide_bounds()
    }
}

/// Slab only over the x >= 0 half-space; the other half is vacuum.
struct HalfSlab {
    z0: f64,
    z1: f64,
}

impl DynamicField for HalfSlab {
    fn query(&self, x: &Point3<f64>, _t: f64) -> (f64, [f64; 3]) {
        if x.x >= 0.0 && x.z >= self.z0 && x.z <= self.z1 {
            (SOLID_DENSITY, [0.6; 3])
        } else {
            (0.0, [0.0; 3])
        }
    }
    fn bounds(&self) -> Aabb {
        wide_bounds()
    }
}

/// Two solid levels split at x = 0: a near slab for x >= 0, a far one
/// for x < 0. A depth cliff runs down the middle of the image.
struct StepSlab;

impl DynamicField for StepSlab {
    fn query(&self, x: &Point3<f64>, _t: f64) -> (f64, [f64; 3]) {
        let (z0, z1) = if x.x >= 0.0 { (0.5, 0.6) } else { (1.4, 1.5) };
        if x.z >= z0 && x.z <= z1 {
            (SOLID_DENSITY, [0.6; 3])
        } else {
            (0.0, [0.0; 3])
        }
    }
    fn bounds(&self) -> Aabb {
        wide_bounds()
    }
}

struct Vacuum;

impl DynamicField for Vacuum {
    fn query(&self, _x: &Point3<f64>, _t: f64) -> (f64, [f64; 3]) {
        (0.0, [0.0; 3])
    }
    fn bounds(&self) -> Aabb {
        wide_bounds()
    }
}

/// Fronto-parallel two-triangle square at depth z spanning +-half.
fn quad_surface(z: f64, half: f64, color: [f64; 3], opacity: f64) -> SurfacePose {
    let mesh = TriMesh {
        vertices: vec![
            Point3::new(-half, -half, z),
            Point3::new(half, -half, z),
            Point3::new(-half, half, z),
            Point3::new(half, half, z),
        ],
        faces: vec![[0, 2, 1], [1, 2, 3]],
        colors: Some(vec![color; 4]),
        opacities: Some(vec![opacity; 4]),
    };
    SurfacePose::new(mesh)
}

fn plain_image(h: usize, w: usize) -> Array3<f64> {
    Array3::from_shape_fn((h, w, 3), |(py, px, c)| match c {
        0 => px as f64 / 10.0,
        1 => py as f64 / 10.0,
        _ => 0.77,
    })
}

fn mask_rect(h: usize, w: usize, x: std::ops::RangeInclusive<usize>, y: std::ops::RangeInclusive<usize>) -> Array2<bool> {
    Array2::from_shape_fn((h, w), |(py, px)| x.contains(&px) && y.contains(&py))
}

fn no_jitter() -> RenderSettings {
    RenderSettings {
        jitter: false,
        ..Default::default()
    }
}

#[test]
fn lift_unprojects_mask_pixels_to_plane_depth() {
    let field = TestSlab {
        z0: 0.8,
        z1: 0.9,
        color: [0.3, 0.5, 0.7],
    };
    let camera = cam(6, 6, 6.0);
    let edit = EditSpec {
        image: plain_image(6, 6),
        mask: mask_rect(6, 6, 2..=3, 2..=3),
        camera: camera.clone(),
        time: 0.0,
    };
    let settings = no_jitter();
    let surf = lift_edit(&edit, &field, &settings, None).unwrap();
    assert_eq!(surf.mesh.vertices.len(), 4);
    assert_eq!(surf.mesh.faces.len(), 2);

    // Independent unprojection: the camera sits at (0,0,-2.2) with
    // image-right = -x and image-down = -y, so a pixel at camera depth d
    // lands at eye + d * (-(px-cx)/f, -(py-cy)/f, 1).
    let colors = surf.mesh.colors.as_ref().unwrap();
    let opacities = surf.mesh.opacities.as_ref().unwrap();
    for (vi, v) in surf.mesh.vertices.iter().enumerate() {
        let [px, py] = surf.source_pixels[vi];
        let d = render_pixel(&field, &camera, px as u32, py as u32, 0.0, &settings).depth;
        assert!((2.99..=3.05).contains(&d), "front face sits at depth 3, got {d}");
        let expect = Point3::new(
            -(px - 2.5) / 6.0 * d,
            -(py - 2.5) / 6.0 * d,
            -2.2 + d,
        );
        assert!((v - expect).norm() < 1e-9, "vertex {v:?} vs {expect:?}");
        assert_eq!(opacities[vi], 1.0);
        let want = [px / 10.0, py / 10.0, 0.77];
        for k in 0..3 {
            assert!((colors[vi][k] - want[k]).abs() < 1e-12);
        }
        let (pix, _) = camera.project(v).unwrap();
        assert!((pix[0] - px).abs() < 0.5 && (pix[1] - py).abs() < 0.5);
    }
}

#[test]
fn lift_pads_bounding_box_with_zero_opacity() {
    let field = TestSlab {
        z0: 0.8,
        z1: 0.9,
        color: [0.5; 3],
    };
    let mut mask = Array2::from_elem((6, 6), false);
    mask[[2, 2]] = true;
    mask[[3, 3]] = true;
    let edit = EditSpec {
        image: plain_image(6, 6),
        mask,
        camera: cam(6, 6, 6.0),
        time: 0.0,
    };
    let surf = lift_edit(&edit, &field, &no_jitter(), None).unwrap();
    assert_eq!(surf.mesh.vertices.len(), 4);
    let opacities = surf.mesh.opacities.as_ref().unwrap();
    for (vi, [px, py]) in surf.source_pixels.iter().enumerate() {
        let masked = (*px == 2.0 && *py == 2.0) || (*px == 3.0 && *py == 3.0);
        assert_eq!(opacities[vi], if masked { 1.0 } else { 0.0 });
    }
}

#[test]
fn lift_drops_faces_across_depth_cliff() {
    let camera = cam(16, 16, 16.0);
    let edit = EditSpec {
        image: plain_image(16, 16),
        mask: mask_rect(16, 16, 5..=10, 5..=10),
        camera,
        time: 0.0,
    };
    // The cliff at x = 0 splits pixel columns 7 and 8; its ~0.9-unit
    // jump dwarfs the ~0.2-unit in-plane spacing.
    let surf = lift_edit(&edit, &StepSlab, &no_jitter(), Some(0.5)).unwrap();
    let (mut near_faces, mut far_faces) = (0, 0);
    for f in &surf.mesh.faces {
        let on_near: Vec<bool> = f
            .iter()
            .map(|&vi| surf.source_pixels[vi][0] <= 7.0)
            .collect();
        assert!(
            on_near.iter().all(|&b| b) || !on_near.iter().any(|&b| b),
            "face {f:?} bridges the depth cliff"
        );
        if on_near[0] {
            near_faces += 1;
        } else {
            far_faces += 1;
        }
    }
    assert!(near_faces > 0 && far_faces > 0);
}

#[test]
fn lift_rejects_bad_inputs() {
    let field = TestSlab {
        z0: 0.8,
        z1: 0.9,
        color: [0.5; 3],
    };
    let settings = no_jitter();
    let base = EditSpec {
        image: plain_image(6, 6),
        mask: mask_rect(6, 6, 2..=3, 2..=3),
        camera: cam(6, 6, 6.0),
        time: 0.0,
    };

    let mut e = base.clone();
    e.mask.fill(false);
    assert!(matches!(
        lift_edit(&e, &field, &settings, None),
        Err(EditError::EmptyMask)
    ));

    let mut e = base.clone();
    e.mask.fill(true);
    assert!(matches!(
        lift_edit(&e, &field, &settings, None),
        Err(EditError::MaskCoversImage)
    ));

    let mut e = base.clone();
    e.mask = mask_rect(7, 6, 2..=3, 2..=3);
    assert!(matches!(
        lift_edit(&e, &field, &settings, None),
        Err(EditError::ShapeMismatch { .. })
    ));

    let mut e = base.clone();
    e.camera = cam(8, 8, 6.0);
    assert!(matches!(
        lift_edit(&e, &field, &settings, None),
        Err(EditError::CameraMismatch { .. })
    ));

    let mut e = base.clone();
    e.mask = mask_rect(6, 6, 2..=2, 2..=2);
    assert!(matches!(
        lift_edit(&e, &field, &settings, None),
        Err(EditError::RegionTooSmall { .. })
    ));

    // Pixels right of center see vacuum: no depth to anchor a vertex.
    let e = EditSpec {
        image: plain_image(16, 16),
        mask: mask_rect(16, 16, 5..=10, 5..=10),
        camera: cam(16, 16, 16.0),
        time: 0.0,
    };
    assert!(matches!(
        lift_edit(&e, &HalfSlab { z0: 0.8, z1: 0.9 }, &settings, None),
        Err(EditError::InvalidDepth { .. })
    ));

    // An impossible edge budget drops every face.
    assert!(matches!(
        lift_edit(&base, &field, &settings, Some(1e-9)),
        Err(EditError::DegenerateSurface)
    ));
}

#[test]
fn reprojection_lands_on_source_pixels() {
    let field = TestSlab {
        z0: 0.7,
        z1: 1.1,
        color: [0.4; 3],
    };
    let camera = cam(16, 16, 14.0);
    let edit = EditSpec {
        image: plain_image(16, 16),
        mask: mask_rect(16, 16, 4..=11, 3..=12),
        camera: camera.clone(),
        time: 0.3,
    };
    // Jittered depth is noisy, but vertices stay on their pixel's ray,
    // so reprojection recovers the source pixel almost exactly.
    let settings = RenderSettings {
        seed: 11,
        ..Default::default()
    };
    let surf = lift_edit(&edit, &field, &settings, None).unwrap();
    assert!(surf.mesh.faces.len() > 50);
    for (vi, v) in surf.mesh.vertices.iter().enumerate() {
        let (pix, _) = camera.project(v).unwrap();
        let [px, py] = surf.source_pixels[vi];
        let err = ((pix[0] - px).powi(2) + (pix[1] - py).powi(2)).sqrt();
        assert!(err < 0.5, "vertex {vi} reprojects {err} px off");
        assert!(err < 1e-9, "construction should be ray-exact, got {err}");
    }
}

#[test]
fn shell_density_matches_laplace_cdf_values() {
    // Peak value is exact: 1/(2 * 0.001) rounds to 500.0 in f64.
    assert_eq!(shell_density(0.0, 1e-3), 500.0);
    // One scale out: 500/e, evaluated independently.
    let want = 183.93972058572117;
    assert!((shell_density(1e-3, 1e-3) - want).abs() < 1e-9);
    // Strictly decreasing, vanishing tail.
    let mut prev = shell_density(0.0, 1e-3);
    for k in 1..200 {
        let d = k as f64 * 5e-4;
        let s = shell_density(d, 1e-3);
        assert!(s < prev && s >= 0.0);
        prev = s;
    }
    assert!(shell_density(0.1, 1e-3) < 1e-40);
}

#[test]
fn mask_band_requires_global_hit() {
    let surface = quad_surface(0.5, 0.5, [1.0, 0.0, 0.0], 1.0);
    let params = SurfaceFieldParams::default();
    let on_surface = Point3::new(0.1, -0.2, 0.5);
    assert!(surface.distance(&on_surface) < 1e-12);

    let hitting = Ray::new(Point3::new(0.1, -0.2, -1.0), Vector3::z());
    let missing = Ray::new(Point3::new(2.0, 2.0, -1.0), Vector3::z());
    assert!(surface.contact(&hitting).is_some());
    assert!(surface.contact(&missing).is_none());

    assert!(surface.mask(&on_surface, true, &params));
    // Same point, but the ray carrying it misses the mesh.
    assert!(!surface.mask(&on_surface, false, &params));
    // Beyond the band on a hitting ray.
    let outside = Point3::new(0.1, -0.2, 0.5 + 2.0 * params.gamma);
    assert!(!surface.mask(&outside, true, &params));
}

#[test]
fn contact_interpolates_face_color() {
    let surface = quad_surface(0.5, 0.5, [1.0, 0.0, 0.0], 1.0);
    let c = surface
        .contact(&Ray::new(Point3::new(0.2, 0.1, -1.0), Vector3::z()))
        .unwrap();
    assert!((c.t - 1.5).abs() < 1e-12);
    for (got, want) in c.color.iter().zip([1.0, 0.0, 0.0]) {
        assert!((got - want).abs() < 1e-9);
    }
    assert!((c.opacity - 1.0).abs() < 1e-9);

    let padding = quad_surface(0.5, 0.5, [1.0, 0.0, 0.0], 0.0);
    let c = padding
        .contact(&Ray::new(Point3::new(0.2, 0.1, -1.0), Vector3::z()))
        .unwrap();
    assert_eq!(c.opacity, 0.0);
}

#[test]
fn two_sample_composite_matches_hand_arithmetic() {
    // Two samples with hand-picked densities, spacings, and masks,
    // pushed through the selection the mask applies: sample 1 keeps the
    // field, sample 2 keeps the surface.
    let sigma_d = [2.0f64, 0.5];
    let sigma_s = [30.0f64, 10.0];
    let m = [0.0f64, 1.0];
    let delta = [0.1f64, 0.2];
    let color_d = [[0.2, 0.4, 0.6], [0.1, 0.1, 0.1]];
    let color_s = [0.9, 0.3, 0.0];

    // Literal evaluation: T_i from the mask-mixed optical depth, each
    // sample contributing both its field and surface terms.
    let mut hand = [0.0; 3];
    let mut optical = 0.0f64;
    for i in 0..2 {
        let t_full = (-optical).exp();
        let a_d = 1.0 - (-sigma_d[i] * delta[i]).exp();
        let a_s = 1.0 - (-sigma_s[i] * delta[i]).exp();
        for k in 0..3 {
            hand[k] += t_full * (a_d * (1.0 - m[i]) * color_d[i][k] + a_s * m[i] * color_s[k]);
        }
        optical += sigma_d[i] * delta[i] * (1.0 - m[i]) + sigma_s[i] * delta[i] * m[i];
    }

    // Production path: select per-sample density/color by the mask, then
    // run the standard front-to-back weights.
    let eff_sigma = [sigma_d[0], sigma_s[1]];
    let eff_color = [color_d[0], color_s];
    let (weights, trans) =
        crate::scenefield::transmittance_weights(&eff_sigma, &delta);
    let mut got = [0.0; 3];
    for (w, c) in weights.iter().zip(&eff_color) {
        for k in 0..3 {
            got[k] += w * c[k];
        }
    }
    for k in 0..3 {
        assert!((got[k] - hand[k]).abs() < 1e-12, "{got:?} vs {hand:?}");
    }
    let w_total: f64 = weights.iter().sum();
    assert!((w_total + trans - 1.0).abs() < 1e-12);
}

#[test]
fn composited_surface_blends_by_band_clipped_optical_depth() {
    // A unit-opacity surface straight ahead of the center pixel, over an
    // opaque green slab. The mask band clips the shell at one scale each
    // side, so the surface's optical depth is 1 - 1/e and the pixel
    // blends surface red over slab green with alpha 1 - exp(-(1-1/e)).
    let field = TestSlab {
        z0: 0.8,
        z1: 0.9,
        color: [0.0, 1.0, 0.0],
    };
    let surface = quad_surface(0.5, 0.6, [1.0, 0.0, 0.0], 1.0);
    let camera = cam(5, 5, 5.0);
    let cs = CompositeSettings {
        render: no_jitter(),
        ..Default::default()
    };
    let px = composite_pixel(&field, &surface, &camera, 2, 2, 0.0, &cs);
    let alpha = 1.0 - (-(1.0 - (-1.0f64).exp())).exp();
    assert!((alpha - 0.46854).abs() < 1e-5, "oracle arithmetic");
    assert!(
        (px.color[0] - alpha).abs() < 0.01,
        "red {} vs {alpha}",
        px.color[0]
    );
    assert!((px.color[1] - (1.0 - alpha)).abs() < 0.01);
    assert!(px.color[2].abs() < 1e-9);
    assert!(px.depth > 2.6 && px.depth < 3.2);
}

#[test]
fn rays_missing_the_surface_render_bit_identically() {
    let field = TestSlab {
        z0: 0.8,
        z1: 0.9,
        color: [0.3, 0.5, 0.7],
    };
    let surface = quad_surface(0.5, 0.15, [1.0, 0.0, 0.0], 1.0);
    let camera = cam(16, 16, 16.0);
    let cs = CompositeSettings {
        render: RenderSettings {
            seed: 7,
            ..Default::default()
        },
        ..Default::default()
    };
    let base = render_image(&field, &camera, 0.0, &cs.render);
    let comp = composite_render(&field, &surface, &camera, 0.0, &cs);
    let mut hits = 0;
    let mut changed = 0;
    for py in 0..16u32 {
        for px in 0..16u32 {
            let ray = camera.ray_through([px as f64, py as f64]);
            let hit = surface
                .contact(&ray)
                .is_some_and(|c| c.opacity > 0.0 && c.t >= cs.render.near && c.t <= cs.render.far);
            let (y, x) = (py as usize, px as usize);
            let same = (0..3).all(|k| {
                base.color[[y, x, k]].to_bits() == comp.color[[y, x, k]].to_bits()
            }) && base.depth[[y, x]].to_bits() == comp.depth[[y, x]].to_bits();
            if hit {
                hits += 1;
                if !same {
                    changed += 1;
                }
            } else {
                assert!(same, "untouched ray ({px},{py}) drifted");
            }
        }
    }
    assert!(hits >= 4, "surface should cover a few pixels, got {hits}");
    assert!(changed > 0, "surface pixels should actually change");

    // All-padding surfaces change nothing anywhere.
    let ghost = quad_surface(0.5, 0.15, [1.0, 0.0, 0.0], 0.0);
    let comp = composite_render(&field, &ghost, &camera, 0.0, &cs);
    assert!(base
        .color
        .iter()
        .zip(comp.color.iter())
        .all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn zero_band_with_no_refinement_degenerates_to_field_render() {
    let field = TestSlab {
        z0: 0.8,
        z1: 0.9,
        color: [0.3, 0.5, 0.7],
    };
    let surface = quad_surface(0.5, 0.6, [1.0, 0.0, 0.0], 1.0);
    let camera = cam(12, 12, 12.0);
    let cs = CompositeSettings {
        render: RenderSettings {
            seed: 3,
            ..Default::default()
        },
        params: SurfaceFieldParams {
            beta: 1e-3,
            gamma: 0.0,
        },
        refine_samples: 0,
        ..Default::default()
    };
    // With an empty mask band and no extra samples the composited
    // integrand is the field's own at the field's own sample points.
    let base = render_image(&field, &camera, 0.0, &cs.render);
    let comp = composite_render(&field, &surface, &camera, 0.0, &cs);
    assert!(base
        .color
        .iter()
        .zip(comp.color.iter())
        .all(|(a, b)| a.to_bits() == b.to_bits()));
    assert!(base
        .depth
        .iter()
        .zip(comp.depth.iter())
        .all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn composite_weights_telescope_to_one() {
    let field = TestSlab {
        z0: 0.8,
        z1: 0.9,
        color: [0.3, 0.5, 0.7],
    };
    let surface = quad_surface(0.82, 0.4, [1.0, 0.0, 0.0], 1.0);
    let camera = cam(12, 12, 12.0);
    for mode in [CompositeMode::Full, CompositeMode::NoMaskField] {
        let cs = CompositeSettings {
            render: RenderSettings {
                seed: 5,
                ..Default::default()
            },
            mode,
            ..Default::default()
        };
        for (px, py) in [(6u32, 6u32), (5, 7), (7, 5)] {
            let profile = composite_profile(&field, &surface, &camera, px, py, 0.0, &cs);
            let mut trans = 1.0f64;
            for w in &profile.weights {
                assert!(*w >= -1e-15);
                assert!(*w <= trans + 1e-12, "weight exceeds remaining light");
                trans -= w;
            }
            assert!((trans - profile.transmittance).abs() < 1e-9);
            let total: f64 = profile.weights.iter().sum();
            assert!((total + profile.transmittance - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn occluded_edit_hidden_by_full_composite_but_not_by_rasterize_over() {
    // Opaque gray occluder in front of a red edited surface.
    let occluder = TestSlab {
        z0: 0.30,
        z1: 0.35,
        color: [0.5; 3],
    };
    let surface = quad_surface(0.5, 0.6, [1.0, 0.0, 0.0], 1.0);
    let camera = cam(5, 5, 5.0);
    let mut cs = CompositeSettings {
        render: no_jitter(),
        ..Default::default()
    };
    let full = composite_pixel(&occluder, &surface, &camera, 2, 2, 0.0, &cs);
    assert!(
        (full.color[0] - 0.5).abs() < 1e-3 && (full.color[1] - 0.5).abs() < 1e-3,
        "occluder should win: {:?}",
        full.color
    );

    cs.mode = CompositeMode::NoOcclusion;
    let over = composite_pixel(&occluder, &surface, &camera, 2, 2, 0.0, &cs);
    assert_eq!(over.color, [1.0, 0.0, 0.0], "rasterize-over ignores the occluder");

    // Without any occluder the full composite still shows the shell's
    // translucency: surface alpha over the background, nothing more.
    cs.mode = CompositeMode::Full;
    let free = composite_pixel(&Vacuum, &surface, &camera, 2, 2, 0.0, &cs);
    let alpha = 1.0 - (-(1.0 - (-1.0f64).exp())).exp();
    assert!((free.color[0] - alpha).abs() < 0.01);
}

#[test]
fn density_blend_ablation_bleeds_field_into_edit() {
    // A blue surface sits inside a thin gray fog layer whose density is
    // comparable to the shell's. Mask selection evicts the fog from the
    // band; the ablation lets the two densities compete there, dragging
    // the pixel away from the edit.
    struct FogAndWall;
    impl DynamicField for FogAndWall {
        fn query(&self, x: &Point3<f64>, _t: f64) -> (f64, [f64; 3]) {
            // Fog filling the mask band exactly, so selection removes
            // all of it; dense enough to out-shout the shell if kept.
            if x.z >= 0.499 && x.z <= 0.501 {
                (2000.0, [0.5; 3])
            } else if x.z >= 0.8 && x.z <= 0.9 {
                (SOLID_DENSITY, [0.5; 3])
            } else {
                (0.0, [0.0; 3])
            }
        }
        fn bounds(&self) -> Aabb {
            wide_bounds()
        }
    }
    let camera = cam(12, 12, 12.0);
    let pose = quad_surface(0.5, 0.6, [0.0, 0.0, 1.0], 1.0);

    let mut cs = CompositeSettings {
        render: no_jitter(),
        ..Default::default()
    };
    let full = composite_pixel(&FogAndWall, &pose, &camera, 5, 5, 0.0, &cs);
    cs.mode = CompositeMode::NoMaskField;
    let blend = composite_pixel(&FogAndWall, &pose, &camera, 5, 5, 0.0, &cs);

    let blue = [0.0, 0.0, 1.0];
    let dist = |c: [f64; 3]| -> f64 {
        c.iter()
            .zip(blue)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let gap: f64 = full
        .color
        .iter()
        .zip(blend.color.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(gap > 0.08, "ablation should visibly differ, gap {gap}");
    assert!(
        dist(full.color) < dist(blend.color),
        "mask selection should sit closer to the edit: {:?} vs {:?}",
        full.color,
        blend.color
    );
}

#[test]
fn surface_outside_sample_range_renders_field_only() {
    let field = TestSlab {
        z0: 0.8,
        z1: 0.9,
        color: [0.3, 0.5, 0.7],
    };
    let camera = cam(8, 8, 8.0);
    let cs = CompositeSettings {
        render: RenderSettings {
            seed: 9,
            ..Default::default()
        },
        ..Default::default()
    };
    let base = render_image(&field, &camera, 0.0, &cs.render);
    // Beyond the far plane and before the near plane.
    for z in [8.0, -2.15] {
        let surface = quad_surface(z, 2.0, [1.0, 0.0, 0.0], 1.0);
        let comp = composite_render(&field, &surface, &camera, 0.0, &cs);
        assert!(base
            .color
            .iter()
            .zip(comp.color.iter())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
