//! Procedural ground-truth textures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{SurfacePoint, TriMesh, Vec3};
use crate::spectrum::EigenBasis;

fn default_colors() -> [[f64; 3]; 2] {
    [[0.85, 0.55, 0.3], [0.3, 0.5, 0.8]]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "pattern", rename_all = "snake_case")]
pub enum SynthTexture {
    /// Solid 3-D checkerboard with cubic cells of edge `scale`.
    Checker3d {
        scale: f64,
        #[serde(default = "default_colors")]
        colors: [[f64; 3]; 2],
    },
    /// `0.5 + 0.5 sin(2π freq ⟨axis, x⟩)` per channel, with a phase shift of
    /// a third of a period between channels.
    Stripes { axis: [f64; 3], freq: f64 },
    /// Three eigenfunctions mapped to RGB, each rescaled by its min/max over
    /// the vertices.
    EigenfunctionRgb { indices: [usize; 3] },
    /// Checker3d modulated by `0.35 + 0.65 |⟨n, view⟩|`: a synthetic
    /// view-dependent target.
    ViewShaded {
        scale: f64,
        #[serde(default = "default_colors")]
        colors: [[f64; 3]; 2],
    },
}

impl SynthTexture {
    pub fn checker(scale: f64) -> SynthTexture {
        SynthTexture::Checker3d {
            scale,
            colors: default_colors(),
        }
    }

    pub fn is_view_dependent(&self) -> bool {
        matches!(self, SynthTexture::ViewShaded { .. })
    }

    pub fn needs_basis(&self) -> bool {
        matches!(self, SynthTexture::EigenfunctionRgb { .. })
    }

    fn validate(&self, basis: Option<&EigenBasis>) -> Result<()> {
        match self {
            SynthTexture::Checker3d { scale, colors } | SynthTexture::ViewShaded { scale, colors } => {
                if !(*scale > 0.0) {
                    return Err(Error::invalid("checker scale must be positive"));
                }
                if colors.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
                    return Err(Error::invalid("checker colors must lie in [0, 1]"));
                }
            }
            SynthTexture::Stripes { axis, freq } => {
                if !freq.is_finite() || Vec3::from(*axis).norm() == 0.0 {
                    return Err(Error::invalid("stripes need a finite frequency and non-zero axis"));
                }
            }
            SynthTexture::EigenfunctionRgb { indices } => {
                let b = basis.ok_or_else(|| Error::invalid("eigenfunction texture needs a basis"))?;
                if let Some(i) = indices.iter().find(|&&i| i >= b.d()) {
                    return Err(Error::invalid(format!("eigenfunction index {i} >= d = {}", b.d())));
                }
            }
        }
        Ok(())
    }
}

fn checker_color(scale: f64, colors: &[[f64; 3]; 2], x: &Vec3) -> [f64; 3] {
    let parity: i64 = x.iter().map(|c| (c / scale).floor() as i64).sum();
    colors[parity.rem_euclid(2) as usize]
}

/// A texture bound to the mesh (and basis) it is evaluated on.
pub struct BoundTexture<'a> {
    texture: SynthTexture,
    mesh: &'a TriMesh,
    /// Per-vertex RGB for the eigenfunction pattern.
    vertex_rgb: Option<Vec<[f64; 3]>>,
}

impl<'a> BoundTexture<'a> {
    pub fn new(texture: &SynthTexture, mesh: &'a TriMesh, basis: Option<&EigenBasis>) -> Result<BoundTexture<'a>> {
        texture.validate(basis)?;
        let vertex_rgb = match texture {
            SynthTexture::EigenfunctionRgb { indices } => {
                let b = basis.expect("validated");
                b.ensure_mesh(mesh)?;
                let mut rgb = vec![[0.0; 3]; b.n()];
                for (c, &i) in indices.iter().enumerate() {
                    let col = b.column(i);
                    let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let span = if hi > lo { hi - lo } else { 1.0 };
                    for (v, x) in col.iter().enumerate() {
                        rgb[v][c] = ((x - lo) / span).clamp(0.0, 1.0);
                    }
                }
                Some(rgb)
            }
            _ => None,
        };
        Ok(BoundTexture {
            texture: texture.clone(),
            mesh,
            vertex_rgb,
        })
    }

    pub fn texture(&self) -> &SynthTexture {
        &self.texture
    }

    /// Color at a surface point seen from direction `view` (pointing from
    /// the surface towards the camera).
    pub fn color(&self, p: &SurfacePoint, view: &Vec3) -> [f64; 3] {
        match &self.texture {
            SynthTexture::Checker3d { scale, colors } => checker_color(*scale, colors, &p.position),
            SynthTexture::Stripes { axis, freq } => {
                let s = Vec3::from(*axis).normalize().dot(&p.position);
                let tau = 2.0 * std::f64::consts::PI;
                std::array::from_fn(|c| 0.5 + 0.5 * (tau * freq * s + tau * c as f64 / 3.0).sin())
            }
            SynthTexture::EigenfunctionRgb { .. } => {
                let rgb = self.vertex_rgb.as_ref().expect("built in new");
                let f = self.mesh.faces()[p.face];
                std::array::from_fn(|c| (0..3).map(|k| p.bary[k] * rgb[f[k]][c]).sum::<f64>().clamp(0.0, 1.0))
            }
            SynthTexture::ViewShaded { scale, colors } => {
                let base = checker_color(*scale, colors, &p.position);
                let n = self.mesh.face_normal(p.face);
                let shade = 0.35 + 0.65 * n.dot(view).abs().min(1.0);
                base.map(|c| c * shade)
            }
        }
    }
}
