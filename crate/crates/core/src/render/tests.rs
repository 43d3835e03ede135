use super::*;
use crate::embedding::{EmbeddingSpec, IntrinsicSpec};
use crate::field::{MlpConfig, MlpParams, ModelMeta};
use crate::mesh::shapes::{grid_plane, icosphere};
use nalgebra::Matrix3;

fn simple_camera(w: usize, h: usize) -> Camera {
    Camera::new(w, h, 40.0, 50.0, w as f64 / 2.0, h as f64 / 2.0, Matrix3::identity(), Vec3::new(0.0, 0.0, -3.0)).unwrap()
}

#[test]
fn principal_pixel_looks_forward() {
    let cam = simple_camera(21, 11);
    let r = cam.pixel_ray(10, 5);
    assert!((r.direction - Vec3::z()).norm() < 1e-15);
    for ray in pixel_rays(&cam) {
        assert!((ray.direction.norm() - 1.0).abs() < 1e-9);
        assert_eq!(ray.origin, cam.center());
    }
}

#[test]
fn corner_pixel_backprojection() {
    let rot = crate::mesh::rotation(Vec3::new(1.0, 2.0, 0.5), 0.7);
    let cam = Camera::new(64, 48, 70.0, 60.0, 30.0, 25.0, rot, Vec3::new(1.0, 2.0, 3.0)).unwrap();
    let r = cam.pixel_ray(63, 47);
    let d = Vec3::new((63.5 - 30.0) / 70.0, (47.5 - 25.0) / 60.0, 1.0).normalize();
    assert!((r.direction - rot * d).norm() < 1e-12);
}

#[test]
fn look_at_orients_opencv_axes() {
    let cam = Camera::look_at(Vec3::new(0.0, -4.0, 0.0), Vec3::zeros(), Vec3::z(), 32, 32, 0.8).unwrap();
    let r = cam.rotation_matrix();
    assert!((r.column(2) - Vec3::y()).norm() < 1e-12);
    // image "down" is world -z
    assert!((r.column(1) + Vec3::z()).norm() < 1e-12);
    assert!((r.determinant() - 1.0).abs() < 1e-12);
    assert!(Camera::look_at(Vec3::new(0.0, 0.0, 5.0), Vec3::zeros(), Vec3::z(), 8, 8, 0.8).is_ok());
}

#[test]
fn camera_json_round_trip_and_validation() {
    let cam = simple_camera(8, 6);
    let json = serde_json::to_value(&cam).unwrap();
    assert!(json.get("R").is_some());
    let back: Camera = serde_json::from_value(json).unwrap();
    assert_eq!(back, cam);
    let mut bad = cam.clone();
    bad.rotation[0] = 2.0;
    assert!(bad.validate().is_err());
    bad = cam;
    bad.fx = 0.0;
    assert!(bad.validate().is_err());
}

#[test]
fn camera_facing_away_sees_nothing() {
    let mesh = icosphere(2, 1.0);
    let cam = Camera::look_at(Vec3::new(0.0, 0.0, 3.0), Vec3::new(0.0, 0.0, 6.0), Vec3::y(), 16, 16, 0.8).unwrap();
    let img = Image::filled(16, 16, [0.5; 3]);
    let set = precompute_samples(&mesh, &[cam], &[img]).unwrap();
    assert!(set.is_empty());
}

#[test]
fn sphere_hit_fraction_matches_projected_disk() {
    let mesh = icosphere(4, 1.0);
    let (size, dist) = (200, 4.0);
    let alpha = (1.0f64 / dist).asin();
    // choose the focal length so the disk covers about a quarter of the frame
    let f = (0.25 * (size * size) as f64 / std::f64::consts::PI).sqrt() / alpha.tan();
    let fov = 2.0 * (0.5 * size as f64 / f).atan();
    let cam = Camera::look_at(Vec3::new(0.0, 0.0, dist), Vec3::zeros(), Vec3::y(), size, size, fov).unwrap();
    let set = precompute_samples(&mesh, &[cam.clone()], &[Image::filled(size, size, [0.0; 3])]).unwrap();
    let analytic = std::f64::consts::PI * (f * alpha.tan()).powi(2) / (size * size) as f64;
    let measured = set.len() as f64 / cam.num_pixels() as f64;
    assert!(set.len() <= cam.num_pixels());
    assert!((measured - analytic).abs() < 0.03 * analytic, "{measured} vs {analytic}");
    for v in &set.view_dirs {
        assert!((v.norm() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn checker_on_plane_matches_direct_evaluation() {
    let mesh = grid_plane(8, 4.0);
    let tex = SynthTexture::checker(0.37);
    let bound = BoundTexture::new(&tex, &mesh, None).unwrap();
    let cam = Camera::look_at(Vec3::new(0.3, -0.2, 5.0), Vec3::new(0.3, -0.2, 0.0), Vec3::y(), 48, 40, 0.7).unwrap();
    let r = render_view(&bound, &mesh, &cam, WHITE).unwrap();
    let colors = [[0.85f32, 0.55, 0.3], [0.3, 0.5, 0.8]];
    let mut hits = 0;
    for v in 0..cam.height {
        for u in 0..cam.width {
            let i = v * cam.width + u;
            let ray = cam.pixel_ray(u, v);
            let t = -ray.origin.z / ray.direction.z;
            let x = ray.at(t);
            let inside = x.x.abs() <= 2.0 && x.y.abs() <= 2.0;
            if !inside || x.x.abs() > 1.99 || x.y.abs() > 1.99 {
                continue;
            }
            assert!(r.mask[i]);
            // stay clear of cell boundaries where rounding decides
            let frac = |c: f64| ((c / 0.37).fract() + 1.0).fract();
            if [x.x, x.y].iter().any(|&c| frac(c) < 1e-6 || frac(c) > 1.0 - 1e-6) {
                continue;
            }
            let parity = ((x.x / 0.37).floor() as i64 + (x.y / 0.37).floor() as i64).rem_euclid(2) as usize;
            assert_eq!(r.image.pixel(i), colors[parity]);
            hits += 1;
        }
    }
    assert!(hits > 1000);
}

#[test]
fn textures_stay_in_unit_range() {
    let mesh = icosphere(2, 1.0);
    let basis = EigenBasis::compute(&mesh, 9, 0).unwrap();
    for tex in [
        SynthTexture::checker(0.5),
        SynthTexture::Stripes {
            axis: [1.0, 1.0, 0.0],
            freq: 2.0,
        },
        SynthTexture::EigenfunctionRgb { indices: [1, 4, 8] },
        SynthTexture::ViewShaded {
            scale: 0.5,
            colors: [[1.0; 3], [0.0; 3]],
        },
    ] {
        let b = BoundTexture::new(&tex, &mesh, Some(&basis)).unwrap();
        for v in 0..mesh.num_vertices() {
            let p = mesh.vertex_point(v);
            let c = b.color(&p, &Vec3::new(0.0, 0.6, 0.8));
            assert!(c.iter().all(|x| (0.0..=1.0).contains(x)), "{tex:?}: {c:?}");
        }
    }
    let bad = SynthTexture::EigenfunctionRgb { indices: [1, 4, 9] };
    assert!(BoundTexture::new(&bad, &mesh, Some(&basis)).is_err());
    assert!(BoundTexture::new(&bad, &mesh, None).is_err());
}

#[test]
fn dataset_is_deterministic_down_to_png_bytes() {
    let mesh = icosphere(3, 1.0);
    let tex = BoundTexture::new(&SynthTexture::checker(0.5), &mesh, None).unwrap();
    let splits = vec![SplitSpec {
        name: "train".into(),
        cameras: bipyramid_rig(3.0, 32, 0.8).unwrap(),
    }];
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for k in 0..2 {
        let ds = make_dataset(&mesh, &tex, &splits).unwrap();
        assert_eq!(ds[0].renderings.len(), 5);
        assert_eq!(ds[0].samples.masks.len(), 5);
        let hit: usize = ds[0].renderings.iter().map(|r| r.mask.iter().filter(|&&m| m).count()).sum();
        assert_eq!(hit, ds[0].samples.len());
        let path = dir.path().join(format!("{k}.png"));
        ds[0].renderings[2].image.save_png(&path).unwrap();
        bytes.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
    assert!(make_dataset(&mesh, &tex, &[]).is_err());
}

#[test]
fn png_round_trip_within_quantization() {
    let mut img = Image::filled(7, 5, [0.0; 3]);
    for i in 0..img.rgb.len() {
        img.rgb[i] = i as f32 / img.rgb.len() as f32;
    }
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.png");
    img.save_png(&p).unwrap();
    let back = Image::load_png(&p).unwrap();
    assert_eq!((back.width, back.height), (7, 5));
    for (a, b) in img.rgb.iter().zip(&back.rgb) {
        assert!((a - b).abs() < 0.01, "{a} {b}");
    }
    for b in 0..=255u8 {
        assert_eq!(encode_srgb(decode_srgb(b)), b);
    }
}

#[test]
fn metric_closed_forms() {
    let a = Image::filled(20, 16, [0.4, 0.5, 0.6]);
    let mask = vec![true; 320];
    assert_eq!(psnr(&a, &a, &mask).unwrap(), PSNR_CAP);
    assert_eq!(dssim(&a, &a, &mask).unwrap(), 0.0);
    let b = Image::filled(20, 16, [0.5, 0.6, 0.7]);
    assert!((masked_mse(&a, &b, &mask).unwrap() - 0.01).abs() < 1e-7);
    assert!((psnr(&a, &b, &mask).unwrap() - 20.0).abs() < 1e-4);
    assert!(psnr(&a, &b, &vec![false; 320]).is_err());
    assert!(psnr(&a, &Image::filled(4, 4, [0.0; 3]), &mask).is_err());
}

/// SSIM straight from its definition: explicit 11x11 window at each pixel.
fn ssim_oracle(a: &Image, b: &Image, mask: &[bool]) -> f64 {
    let (w, h) = (a.width as isize, a.height as isize);
    let g = |d: isize| (-(d * d) as f64 / (2.0 * 1.5 * 1.5)).exp();
    let (c1, c2) = (1e-4, 9e-4);
    let mut total = 0.0;
    let mut count = 0;
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                if !mask[(y * w + x) as usize] {
                    continue;
                }
                let (mut ws, mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in -5..=5 {
                    for dx in -5..=5 {
                        let (xx, yy) = (x + dx, y + dy);
                        if xx < 0 || yy < 0 || xx >= w || yy >= h || !mask[(yy * w + xx) as usize] {
                            continue;
                        }
                        let wt = g(dx) * g(dy);
                        let i = (yy * w + xx) as usize;
                        let (p, q) = (a.rgb[3 * i + c] as f64, b.rgb[3 * i + c] as f64);
                        ws += wt;
                        sa += wt * p;
                        sb += wt * q;
                        saa += wt * p * p;
                        sbb += wt * q * q;
                        sab += wt * p * q;
                    }
                }
                let (ma, mb) = (sa / ws, sb / ws);
                let (va, vb, cab) = (saa / ws - ma * ma, sbb / ws - mb * mb, sab / ws - ma * mb);
                total += ((2.0 * ma * mb + c1) * (2.0 * cab + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
    }
    total / count as f64
}

#[test]
fn ssim_matches_direct_window_oracle() {
    let (w, h) = (24, 19);
    let mut a = Image::filled(w, h, [0.0; 3]);
    let mut b = a.clone();
    let mut mask = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let on = ((x / 3) + (y / 3)) % 2 == 0;
            let v = if on { 0.9 } else { 0.1 };
            a.set_pixel(i, [v, v * 0.5, 0.3]);
            b.set_pixel(i, [1.0 - v, 0.5 - v * 0.5, 0.3 + 0.01 * x as f32]);
            mask[i] = (x as isize - 12).pow(2) + (y as isize - 9).pow(2) < 64;
        }
    }
    let fast = ssim(&a, &b, &mask).unwrap();
    let slow = ssim_oracle(&a, &b, &mask);
    assert!((fast - slow).abs() < 1e-9, "{fast} vs {slow}");
    assert!(fast < 0.0);
    let full = vec![true; w * h];
    assert!((ssim(&a, &b, &full).unwrap() - ssim_oracle(&a, &b, &full)).abs() < 1e-9);
}

#[test]
fn background_never_affects_metrics() {
    let (w, h) = (16, 16);
    let mut a = Image::filled(w, h, [0.2; 3]);
    let mut b = a.clone();
    let mut mask = vec![false; w * h];
    for i in 0..w * h {
        a.set_pixel(i, [(i % 7) as f32 / 7.0, 0.5, 0.2]);
        b.set_pixel(i, [(i % 5) as f32 / 5.0, 0.4, 0.3]);
        mask[i] = i % 16 > 3 && i / 16 > 5;
    }
    let (p0, d0) = (psnr(&a, &b, &mask).unwrap(), dssim(&a, &b, &mask).unwrap());
    for i in (0..w * h).filter(|&i| !mask[i]) {
        b.set_pixel(i, [1.0, 0.0, 1.0]);
        a.set_pixel(i, [0.0, 1.0, 0.0]);
    }
    assert_eq!(p0, psnr(&a, &b, &mask).unwrap());
    assert_eq!(d0, dssim(&a, &b, &mask).unwrap());
}

fn test_model(mesh: &TriMesh, basis: &EigenBasis, zero: bool) -> FieldModel {
    let mut c = MlpConfig::texture(basis.d(), 3);
    c.hidden_width = 32;
    let mut p = MlpParams::init(&c).unwrap();
    if zero {
        p.values.iter_mut().for_each(|v| *v = 0.0);
    }
    let meta = ModelMeta {
        config: c,
        embedding: EmbeddingSpec::Intrinsic(IntrinsicSpec::ones(basis.d())),
        view_encoding: None,
        mesh_hash: Some(mesh.content_hash()),
        basis_hash: Some(basis.content_hash()),
        training: serde_json::Value::Null,
    };
    FieldModel::new(meta, p).unwrap()
}

#[test]
fn constant_field_renders_a_flat_silhouette() {
    let mesh = icosphere(2, 1.0);
    let basis = EigenBasis::compute(&mesh, 8, 0).unwrap().bound_to(&mesh);
    let model = test_model(&mesh, &basis, true);
    let field = NeuralField::new(&model, Some(&basis), &mesh).unwrap();
    let cam = Camera::look_at(Vec3::new(0.0, 0.0, 3.0), Vec3::zeros(), Vec3::y(), 24, 24, 0.9).unwrap();
    let r = render_view(&field, &mesh, &cam, WHITE).unwrap();
    assert!(r.mask.iter().any(|&m| m));
    for i in 0..cam.num_pixels() {
        let expect = if r.mask[i] { [0.5; 3] } else { WHITE };
        assert_eq!(r.image.pixel(i), expect);
    }
}

#[test]
fn neural_rendering_is_order_independent_and_matches_manual_pipeline() {
    let mesh = icosphere(3, 1.0);
    let basis = EigenBasis::compute(&mesh, 16, 0).unwrap().bound_to(&mesh);
    let model = test_model(&mesh, &basis, false);
    let field = NeuralField::new(&model, Some(&basis), &mesh).unwrap();
    let cam = Camera::look_at(Vec3::new(1.0, 2.0, 2.0), Vec3::zeros(), Vec3::z(), 48, 40, 0.9).unwrap();
    let scan = render_view(&field, &mesh, &cam, WHITE).unwrap();
    let tiled = render_view_tiled(&field, &mesh, &cam, WHITE, 7).unwrap();
    assert_eq!(scan.mask, tiled.mask);
    assert_eq!(scan.image, tiled.image);

    let embedding = crate::embedding::bind(&model.meta.embedding, Some(&basis), &mesh).unwrap();
    let mut checked = 0;
    for k in 0..100 {
        let i = (k * 7919) % cam.num_pixels();
        let ray = cam.pixel_ray(i % cam.width, i / cam.width);
        let Some(hit) = mesh.ray_intersect(&ray) else {
            assert!(!scan.mask[i]);
            continue;
        };
        let mut x = vec![0f32; basis.d()];
        embedding.embed_f32(&hit.point, &mut x);
        let y = model.params.forward(&x, None, 1).unwrap();
        assert_eq!(scan.image.pixel(i), [y[0], y[1], y[2]]);
        checked += 1;
    }
    assert!(checked > 20);
}

#[test]
fn hash_mismatch_is_rejected() {
    let mesh = icosphere(2, 1.0);
    let basis = EigenBasis::compute(&mesh, 8, 0).unwrap().bound_to(&mesh);
    let model = test_model(&mesh, &basis, true);
    let other = icosphere(2, 1.01);
    assert!(matches!(NeuralField::new(&model, Some(&basis), &other), Err(Error::HashMismatch { .. })));
    let basis2 = EigenBasis::compute(&mesh, 8, 5).unwrap().bound_to(&mesh).truncated(8).unwrap();
    if basis2.content_hash() != basis.content_hash() {
        assert!(NeuralField::new(&model, Some(&basis2), &mesh).is_err());
    }
}
