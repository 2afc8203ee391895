//! Pinhole camera with a rigid pose.

use nalgebra::{Matrix3, Matrix4, Point3, Vector3};

use super::{GeometryError, Ray};

/// Minimum camera-frame z for a point to count as in front of the camera.
const MIN_Z: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    cam_to_world: Matrix4<f64>,
    world_to_cam: Matrix4<f64>,
}

impl Camera {
    /// Validates that `cam_to_world` is rigid (orthonormal rotation with
    /// positive determinant, affine bottom row) and that the intrinsics
    /// are usable.
    pub fn new(
        width: usize,
        height: usize,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        cam_to_world: Matrix4<f64>,
    ) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::BadIntrinsics("zero image dimension".into()));
        }
        if !(fx.is_finite() && fy.is_finite() && cx.is_finite() && cy.is_finite())
            || fx <= 0.0
            || fy <= 0.0
        {
            return Err(GeometryError::BadIntrinsics(format!(
                "fx={fx} fy={fy} cx={cx} cy={cy}"
            )));
        }
        let bottom = cam_to_world.row(3);
        if (bottom[0]).abs() > 1e-9
            || (bottom[1]).abs() > 1e-9
            || (bottom[2]).abs() > 1e-9
            || (bottom[3] - 1.0).abs() > 1e-9
        {
            return Err(GeometryError::BadPose("bottom row is not (0,0,0,1)".into()));
        }
        let r = cam_to_world.fixed_view::<3, 3>(0, 0).into_owned();
        let gram = r.transpose() * r;
        if (gram - Matrix3::identity()).abs().max() > 1e-6 {
            return Err(GeometryError::BadPose("rotation is not orthonormal".into()));
        }
        if r.determinant() < 0.0 {
            return Err(GeometryError::BadPose("rotation flips handedness".into()));
        }
        let t = cam_to_world.fixed_view::<3, 1>(0, 3).into_owned();
        let rt = r.transpose();
        let mut world_to_cam = Matrix4::identity();
        world_to_cam.fixed_view_mut::<3, 3>(0, 0).copy_from(&rt);
        world_to_cam.fixed_view_mut::<3, 1>(0, 3).copy_from(&(-rt * t));
        Ok(Self {
            width,
            height,
            fx,
            fy,
            cx,
            cy,
            cam_to_world,
            world_to_cam,
        })
    }

    /// Camera at `eye` looking toward `target`. `image_down` is the world
    /// direction that increasing pixel y should follow.
    pub fn look_at(
        width: usize,
        height: usize,
        focal: f64,
        eye: Point3<f64>,
        target: Point3<f64>,
        image_down: Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        let z = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| GeometryError::BadPose("eye equals target".into()))?;
        let x = image_down
            .cross(&z)
            .try_normalize(1e-12)
            .ok_or_else(|| GeometryError::BadPose("image_down parallel to view".into()))?;
        let y = z.cross(&x);
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 1>(0, 0).copy_from(&x);
        m.fixed_view_mut::<3, 1>(0, 1).copy_from(&y);
        m.fixed_view_mut::<3, 1>(0, 2).copy_from(&z);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&eye.coords);
        let cx = (width as f64 - 1.0) / 2.0;
        let cy = (height as f64 - 1.0) / 2.0;
        Self::new(width, height, focal, focal, cx, cy, m)
    }

    pub fn cam_to_world(&self) -> &Matrix4<f64> {
        &self.cam_to_world
    }

    pub fn center(&self) -> Point3<f64> {
        Point3::from(self.cam_to_world.fixed_view::<3, 1>(0, 3).into_owned())
    }

    /// World-space viewing direction (camera +z).
    pub fn forward(&self) -> Vector3<f64> {
        self.cam_to_world.fixed_view::<3, 1>(0, 2).into_owned()
    }

    fn to_cam(&self, p: &Point3<f64>) -> Vector3<f64> {
        (self.world_to_cam * p.to_homogeneous()).xyz()
    }

    /// Camera-frame z of a world point (may be negative).
    pub fn zdepth(&self, p: &Point3<f64>) -> f64 {
        self.to_cam(p).z
    }

    /// Projects to (pixel, depth); errors for points at or behind the
    /// camera plane.
    pub fn project(&self, p: &Point3<f64>) -> Result<([f64; 2], f64), GeometryError> {
        let c = self.to_cam(p);
        if c.z < MIN_Z {
            return Err(GeometryError::BehindCamera { z: c.z });
        }
        Ok((
            [
                self.fx * c.x / c.z + self.cx,
                self.fy * c.y / c.z + self.cy,
            ],
            c.z,
        ))
    }

    /// Inverse of [`Camera::project`]: pixel plus camera-frame depth back
    /// to a world point.
    pub fn unproject(&self, pixel: [f64; 2], depth: f64) -> Point3<f64> {
        let dir = Vector3::new(
            (pixel[0] - self.cx) / self.fx,
            (pixel[1] - self.cy) / self.fy,
            1.0,
        ) * depth;
        Point3::from((self.cam_to_world * dir.push(1.0)).xyz())
    }

    /// Ray from the camera center through a pixel.
    pub fn ray_through(&self, pixel: [f64; 2]) -> Ray {
        let dir_cam = Vector3::new(
            (pixel[0] - self.cx) / self.fx,
            (pixel[1] - self.cy) / self.fy,
            1.0,
        );
        let r = self.cam_to_world.fixed_view::<3, 3>(0, 0);
        Ray::new(self.center(), r * dir_cam)
    }

    /// Conversion factor from distance along `ray_through(pixel)` to
    /// camera-frame depth (the z component of the unit ray direction in
    /// camera coordinates).
    pub fn ray_depth_scale(&self, pixel: [f64; 2]) -> f64 {
        let dir_cam = Vector3::new(
            (pixel[0] - self.cx) / self.fx,
            (pixel[1] - self.cy) / self.fy,
            1.0,
        );
        1.0 / dir_cam.norm()
    }

    /// True when the pixel lies inside the interpolable image rectangle.
    pub fn contains_pixel(&self, pixel: [f64; 2]) -> bool {
        pixel[0] >= 0.0
            && pixel[1] >= 0.0
            && pixel[0] <= self.width as f64 - 1.0
            && pixel[1] <= self.height as f64 - 1.0
    }
}
