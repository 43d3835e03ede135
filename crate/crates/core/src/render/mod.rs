//! Cameras, ray-cast training samples, rendering of fields and textures,
//! and image metrics.

mod camera;
mod image;
mod texture;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use self::image::{decode_srgb, dssim, encode_srgb, masked_mae, masked_mse, psnr, save_mask_png, ssim, Image, PSNR_CAP};
pub use camera::{bipyramid_rig, orbit_rig, pixel_rays, Camera};
pub use texture::{BoundTexture, SynthTexture};

use crate::embedding::{bind, embed_posenc, PointEmbedding, PosencSpec};
use crate::error::{Error, Result};
use crate::field::{FieldModel, TrainingData};
use crate::mesh::{SurfacePoint, TriMesh, Vec3};
use crate::spectrum::EigenBasis;

/// Rows per network evaluation call when rendering.
const EVAL_CHUNK: usize = 1024;

pub const WHITE: [f32; 3] = [1.0, 1.0, 1.0];

/// Something that assigns a color to a surface point seen from a direction.
pub trait SurfaceField: Sync {
    /// `views[i]` points from the surface towards the camera.
    fn eval(&self, points: &[SurfacePoint], views: &[Vec3]) -> Result<Vec<[f32; 3]>>;
}

impl SurfaceField for BoundTexture<'_> {
    fn eval(&self, points: &[SurfacePoint], views: &[Vec3]) -> Result<Vec<[f32; 3]>> {
        Ok(points
            .iter()
            .zip(views)
            .map(|(p, v)| self.color(p, v).map(|c| c as f32))
            .collect())
    }
}

/// A trained model bound to the mesh (and basis) it is queried on.
pub struct NeuralField<'a> {
    model: &'a FieldModel,
    embedding: Box<dyn PointEmbedding + 'a>,
}

impl<'a> NeuralField<'a> {
    /// Checks that the model was trained against this mesh and basis when
    /// it recorded their hashes.
    pub fn new(model: &'a FieldModel, basis: Option<&'a EigenBasis>, mesh: &'a TriMesh) -> Result<NeuralField<'a>> {
        if let (Some(expected), Some(b)) = (&model.meta.basis_hash, basis) {
            let found = b.content_hash();
            if *expected != found {
                return Err(Error::HashMismatch {
                    expected: expected.clone(),
                    found,
                });
            }
        }
        if let Some(expected) = &model.meta.mesh_hash {
            let found = mesh.content_hash();
            if *expected != found {
                return Err(Error::HashMismatch {
                    expected: expected.clone(),
                    found,
                });
            }
        }
        Self::unchecked(model, basis, mesh)
    }

    /// Binds without comparing recorded hashes; used for transfer, where
    /// the embedding is deliberately evaluated on another shape.
    pub fn unchecked(model: &'a FieldModel, basis: Option<&'a EigenBasis>, mesh: &'a TriMesh) -> Result<NeuralField<'a>> {
        let embedding = bind(&model.meta.embedding, basis, mesh)?;
        Self::with_embedding(model, embedding)
    }

    pub fn with_embedding(model: &'a FieldModel, embedding: Box<dyn PointEmbedding + 'a>) -> Result<NeuralField<'a>> {
        if embedding.dim() != model.params.config.input_dim {
            return Err(Error::shape(format!(
                "embedding has {} outputs, network takes {}",
                embedding.dim(),
                model.params.config.input_dim
            )));
        }
        if model.params.config.output_dim != 3 {
            return Err(Error::shape("rendering needs an RGB network"));
        }
        if model.params.config.view_dim.is_some() != model.meta.view_encoding.is_some() {
            return Err(Error::invalid("view-dependent network without a view encoding"));
        }
        Ok(NeuralField { model, embedding })
    }

    fn eval_chunk(&self, points: &[SurfacePoint], views: &[Vec3]) -> Result<Vec<[f32; 3]>> {
        let d = self.embedding.dim();
        let mut x = vec![0f32; points.len() * d];
        for (p, row) in points.iter().zip(x.chunks_exact_mut(d)) {
            self.embedding.embed_f32(p, row);
        }
        let v = match &self.model.meta.view_encoding {
            Some(spec) => Some(encode_views(spec, views)?),
            None => None,
        };
        let y = self.model.params.forward(&x, v.as_deref(), points.len())?;
        Ok(y.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    }
}

impl SurfaceField for NeuralField<'_> {
    fn eval(&self, points: &[SurfacePoint], views: &[Vec3]) -> Result<Vec<[f32; 3]>> {
        let chunks: Vec<Result<Vec<[f32; 3]>>> = points
            .par_chunks(EVAL_CHUNK)
            .zip(views.par_chunks(EVAL_CHUNK))
            .map(|(p, v)| self.eval_chunk(p, v))
            .collect();
        let mut out = Vec::with_capacity(points.len());
        for c in chunks {
            out.extend(c?);
        }
        Ok(out)
    }
}

/// Positional encoding of unit view directions, one row per direction.
pub fn encode_views(spec: &PosencSpec, views: &[Vec3]) -> Result<Vec<f32>> {
    let mut out = Vec::with_capacity(views.len() * spec.output_dim());
    for v in views {
        out.extend(embed_posenc(spec, v)?.into_iter().map(|x| x as f32));
    }
    Ok(out)
}

/// Preprocessed rays: one entry per pixel whose ray hits the mesh.
#[derive(Clone, Debug, Default)]
pub struct RaySampleSet {
    pub points: Vec<SurfacePoint>,
    /// Unit vectors from the surface towards the camera.
    pub view_dirs: Vec<Vec3>,
    pub colors: Vec<[f32; 3]>,
    pub image_ids: Vec<u32>,
    pub pixel_ids: Vec<u32>,
    /// Per image, which pixels hit the mesh.
    pub masks: Vec<Vec<bool>>,
}

impl RaySampleSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Network inputs and targets for these samples.
    pub fn training_data(&self, embedding: &dyn PointEmbedding, view_encoding: Option<&PosencSpec>) -> Result<TrainingData> {
        let d = embedding.dim();
        let mut x = vec![0f32; self.len() * d];
        x.par_chunks_mut(d)
            .zip(self.points.par_iter())
            .for_each(|(row, p)| embedding.embed_f32(p, row));
        let targets: Vec<f32> = self.colors.iter().flatten().copied().collect();
        let data = TrainingData::new(x, d, targets, 3)?;
        match view_encoding {
            Some(spec) => data.with_views(encode_views(spec, &self.view_dirs)?, spec.output_dim()),
            None => Ok(data),
        }
    }
}

/// Hits of every pixel ray of a camera, in scanline order.
fn cast(mesh: &TriMesh, camera: &Camera) -> Vec<Option<(SurfacePoint, Vec3)>> {
    mesh.bvh();
    (0..camera.num_pixels())
        .into_par_iter()
        .map(|i| {
            let ray = camera.pixel_ray(i % camera.width, i / camera.width);
            mesh.ray_intersect(&ray).map(|h| (h.point, -ray.direction))
        })
        .collect()
}

/// Intersects every pixel ray with the mesh once and records the surface
/// point, view direction and image color of each hit.
pub fn precompute_samples(mesh: &TriMesh, cameras: &[Camera], images: &[Image]) -> Result<RaySampleSet> {
    if cameras.len() != images.len() {
        return Err(Error::shape(format!("{} cameras but {} images", cameras.len(), images.len())));
    }
    let mut set = RaySampleSet::default();
    for (k, (cam, img)) in cameras.iter().zip(images).enumerate() {
        cam.validate()?;
        if img.width != cam.width || img.height != cam.height {
            return Err(Error::shape(format!(
                "image {k} is {}x{}, camera expects {}x{}",
                img.width, img.height, cam.width, cam.height
            )));
        }
        let hits = cast(mesh, cam);
        let mut mask = vec![false; cam.num_pixels()];
        for (i, hit) in hits.into_iter().enumerate() {
            if let Some((p, view)) = hit {
                let c = img.pixel(i);
                if c.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("image {k} pixel {i}")));
                }
                mask[i] = true;
                set.points.push(p);
                set.view_dirs.push(view);
                set.colors.push(c);
                set.image_ids.push(k as u32);
                set.pixel_ids.push(i as u32);
            }
        }
        set.masks.push(mask);
    }
    Ok(set)
}

#[derive(Clone, Debug)]
pub struct Rendering {
    pub image: Image,
    pub mask: Vec<bool>,
}

/// Renders a field from a camera; pixels whose ray misses the mesh get
/// `background`.
pub fn render_view(field: &dyn SurfaceField, mesh: &TriMesh, camera: &Camera, background: [f32; 3]) -> Result<Rendering> {
    camera.validate()?;
    let hits = cast(mesh, camera);
    render_hits(field, camera, &hits, background)
}

fn render_hits(field: &dyn SurfaceField, camera: &Camera, hits: &[Option<(SurfacePoint, Vec3)>], background: [f32; 3]) -> Result<Rendering> {
    let (idx, (points, views)): (Vec<usize>, (Vec<SurfacePoint>, Vec<Vec3>)) = hits
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.as_ref().map(|(p, v)| (i, (*p, *v))))
        .unzip();
    let colors = field.eval(&points, &views)?;
    let mut image = Image::filled(camera.width, camera.height, background);
    let mut mask = vec![false; camera.num_pixels()];
    for (i, c) in idx.into_iter().zip(colors) {
        image.set_pixel(i, c);
        mask[i] = true;
    }
    Ok(Rendering { image, mask })
}

/// Renders in square tiles instead of one scanline pass. Exists to check
/// that pixel order does not affect results.
pub fn render_view_tiled(field: &dyn SurfaceField, mesh: &TriMesh, camera: &Camera, background: [f32; 3], tile: usize) -> Result<Rendering> {
    camera.validate()?;
    let tile = tile.max(1);
    let mut image = Image::filled(camera.width, camera.height, background);
    let mut mask = vec![false; camera.num_pixels()];
    for ty in (0..camera.height).step_by(tile) {
        for tx in (0..camera.width).step_by(tile) {
            let mut idx = Vec::new();
            let (mut points, mut views) = (Vec::new(), Vec::new());
            for v in ty..(ty + tile).min(camera.height) {
                for u in tx..(tx + tile).min(camera.width) {
                    let ray = camera.pixel_ray(u, v);
                    if let Some(h) = mesh.ray_intersect(&ray) {
                        idx.push(v * camera.width + u);
                        points.push(h.point);
                        views.push(-ray.direction);
                    }
                }
            }
            for (i, c) in idx.into_iter().zip(field.eval(&points, &views)?) {
                image.set_pixel(i, c);
                mask[i] = true;
            }
        }
    }
    Ok(Rendering { image, mask })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub name: String,
    pub cameras: Vec<Camera>,
}

#[derive(Clone, Debug)]
pub struct DatasetSplit {
    pub name: String,
    pub cameras: Vec<Camera>,
    pub renderings: Vec<Rendering>,
    pub samples: RaySampleSet,
}

/// Ground-truth images of a texture for each split, and the ray samples
/// derived from them.
pub fn make_dataset(mesh: &TriMesh, texture: &BoundTexture, splits: &[SplitSpec]) -> Result<Vec<DatasetSplit>> {
    if splits.iter().all(|s| s.cameras.is_empty()) {
        return Err(Error::invalid("dataset needs at least one camera"));
    }
    splits
        .iter()
        .map(|s| {
            let renderings = s
                .cameras
                .iter()
                .map(|c| render_view(texture, mesh, c, WHITE))
                .collect::<Result<Vec<_>>>()?;
            let images: Vec<Image> = renderings.iter().map(|r| r.image.clone()).collect();
            let samples = precompute_samples(mesh, &s.cameras, &images)?;
            Ok(DatasetSplit {
                name: s.name.clone(),
                cameras: s.cameras.clone(),
                renderings,
                samples,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests;
