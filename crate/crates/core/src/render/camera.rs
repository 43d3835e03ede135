//! Pinhole camera in the OpenCV convention: +z forward, +x right, +y down,
//! pixel centers at `(u + 0.5, v + 0.5)`.

use std::path::Path;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Ray, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Camera-to-world rotation, row-major.
    #[serde(rename = "R")]
    pub rotation: [f64; 9],
    /// Camera center in world coordinates.
    pub t: [f64; 3],
}

impl Camera {
    pub fn new(width: usize, height: usize, fx: f64, fy: f64, cx: f64, cy: f64, rotation: Matrix3<f64>, center: Vec3) -> Result<Camera> {
        let mut r = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                r[3 * i + j] = rotation[(i, j)];
            }
        }
        let cam = Camera {
            width,
            height,
            fx,
            fy,
            cx,
            cy,
            rotation: r,
            t: [center.x, center.y, center.z],
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `eye` looking at `target`, square pixels, vertical field of
    /// view `fov_y` (radians), principal point at the image center.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, width: usize, height: usize, fov_y: f64) -> Result<Camera> {
        let z = (target - eye).normalize();
        let mut down = -(up - z * up.dot(&z));
        if down.norm() < 1e-9 {
            // looking along `up`: any perpendicular will do
            let alt = if z.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
            down = -(alt - z * alt.dot(&z));
        }
        let y = down.normalize();
        let x = y.cross(&z);
        let r = Matrix3::from_columns(&[x, y, z]);
        let f = 0.5 * height as f64 / (0.5 * fov_y).tan();
        Camera::new(width, height, f, f, 0.5 * width as f64, 0.5 * height as f64, r, eye)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("camera image size must be positive"));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::invalid("focal lengths must be positive"));
        }
        let r = self.rotation_matrix();
        let err = (r.transpose() * r - Matrix3::identity()).norm();
        if !(err < 1e-9) {
            return Err(Error::invalid(format!("camera rotation is not orthonormal (error {err:.3e})")));
        }
        Ok(())
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_row_slice(&self.rotation)
    }

    pub fn center(&self) -> Vec3 {
        Vec3::from(self.t)
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    /// Ray through the center of pixel `(u, v)`.
    pub fn pixel_ray(&self, u: usize, v: usize) -> Ray {
        let d = Vec3::new(
            (u as f64 + 0.5 - self.cx) / self.fx,
            (v as f64 + 0.5 - self.cy) / self.fy,
            1.0,
        );
        Ray::new(self.center(), self.rotation_matrix() * d).expect("validated camera gives finite directions")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Camera> {
        let cam: Camera = serde_json::from_slice(&std::fs::read(path)?)?;
        cam.validate()?;
        Ok(cam)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}

/// One ray per pixel in scanline order.
pub fn pixel_rays(camera: &Camera) -> Vec<Ray> {
    let mut rays = Vec::with_capacity(camera.num_pixels());
    for v in 0..camera.height {
        for u in 0..camera.width {
            rays.push(camera.pixel_ray(u, v));
        }
    }
    rays
}

/// Cameras on a sphere of radius `distance` around the origin looking at it:
/// one above, one below and three around the equator.
pub fn bipyramid_rig(distance: f64, size: usize, fov_y: f64) -> Result<Vec<Camera>> {
    let mut eyes = vec![Vec3::new(0.0, 0.0, distance), Vec3::new(0.0, 0.0, -distance)];
    for k in 0..3 {
        let a = 2.0 * std::f64::consts::PI * k as f64 / 3.0;
        eyes.push(distance * Vec3::new(a.cos(), a.sin(), 0.0));
    }
    eyes.into_iter()
        .map(|e| Camera::look_at(e, Vec3::zeros(), Vec3::z(), size, size, fov_y))
        .collect()
}

/// `count` cameras evenly spaced in azimuth (starting at `azimuth0`) at a
/// fixed elevation, all looking at the origin.
pub fn orbit_rig(count: usize, elevation: f64, azimuth0: f64, distance: f64, size: usize, fov_y: f64) -> Result<Vec<Camera>> {
    (0..count)
        .map(|k| {
            let a = azimuth0 + 2.0 * std::f64::consts::PI * k as f64 / count as f64;
            let eye = distance * Vec3::new(elevation.cos() * a.cos(), elevation.cos() * a.sin(), elevation.sin());
            Camera::look_at(eye, Vec3::zeros(), Vec3::z(), size, size, fov_y)
        })
        .collect()
}
