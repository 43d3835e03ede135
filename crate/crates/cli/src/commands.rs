use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use infield::bench1d::run_benchmark;
use infield::embedding::{bind, EmbeddingSpec};
use infield::field::{train, FieldModel, MlpParams, ModelMeta};
use infield::mesh::{write_obj, TriMesh, Vec3};
use infield::ntk::{embed_vertices, ntk_matrix, save_heatmap, stationarity_coeffs, stationarity_score};
use infield::render::{
    dssim, make_dataset, masked_mae, masked_mse, precompute_samples, psnr, render_view, save_mask_png, BoundTexture, Camera,
    Image, NeuralField, Rendering, SplitSpec, WHITE,
};
use infield::spectrum::EigenBasis;
use infield::transfer::{fmap_from_p2p, radial_correspondence, render_transferred, Correspondence};
use log::info;
use serde::Serialize;

use crate::config::{CorrespondenceSource, ExperimentConfig, Metric};
use crate::provenance::Provenance;

pub struct Ctx {
    pub cfg: ExperimentConfig,
    prov: Provenance,
}

impl Ctx {
    pub fn new(cfg: ExperimentConfig, subcommand: &'static str) -> Ctx {
        Ctx {
            cfg,
            prov: Provenance::new(subcommand),
        }
    }

    fn stage(&self, name: &str) -> PathBuf {
        self.cfg.output_dir.join(name)
    }

    fn mesh(&mut self) -> Result<TriMesh> {
        if let Some(p) = self.cfg.mesh.file() {
            self.prov.input_file(p)?;
        }
        self.cfg.mesh.build()
    }

    fn basis(&mut self, mesh: &TriMesh) -> Result<EigenBasis> {
        let path = self.stage("eigens").join("basis.infbasis");
        ensure!(path.is_file(), "{} not found; run `eigens` first", path.display());
        let basis = EigenBasis::from_bytes(&self.prov.read(&path)?)?;
        basis.ensure_mesh(mesh).context("the stored eigenbasis belongs to a different mesh")?;
        Ok(basis)
    }

    fn model(&mut self) -> Result<FieldModel> {
        let path = self.stage("train").join("model.infmodel");
        ensure!(path.is_file(), "{} not found; run `train` first", path.display());
        Ok(FieldModel::from_bytes(&self.prov.read(&path)?)?)
    }

    /// Cameras and ground-truth images written by `gen-data`.
    fn split(&mut self, name: &str) -> Result<(Vec<Camera>, Vec<Image>)> {
        let dir = self.stage("gen-data").join(name);
        let cam_path = dir.join("cameras.json");
        ensure!(cam_path.is_file(), "{} not found; run `gen-data` first", cam_path.display());
        let cams: Vec<Camera> = serde_json::from_slice(&self.prov.read(&cam_path)?)?;
        let mut images = Vec::with_capacity(cams.len());
        for k in 0..cams.len() {
            let p = dir.join(view_name(k));
            self.prov.input_file(&p)?;
            images.push(Image::load_png(&p)?);
        }
        Ok((cams, images))
    }

    fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        self.prov.write(path, bytes)
    }

    fn wrote(&mut self, path: &Path) -> Result<()> {
        self.prov.output_file(path)
    }

    pub fn finish(self, stage: &str) -> Result<()> {
        let dir = self.stage(stage);
        self.prov.finish(&self.cfg, &dir)
    }
}

fn view_name(k: usize) -> String {
    format!("view_{k:03}.png")
}

fn json_bytes(v: &impl Serialize) -> Result<Vec<u8>> {
    Ok((serde_json::to_string_pretty(v)? + "\n").into_bytes())
}

pub fn gen_data(ctx: &mut Ctx) -> Result<()> {
    let mesh = ctx.mesh()?;
    let out = ctx.stage("gen-data");
    std::fs::create_dir_all(&out)?;
    let mesh_path = out.join("mesh.obj");
    write_obj(&mesh, &mesh_path)?;
    ctx.wrote(&mesh_path)?;
    let texture = ctx.cfg.dataset.texture.clone();
    let basis = if texture.needs_basis() { Some(ctx.basis(&mesh)?) } else { None };
    let bound = BoundTexture::new(&texture, &mesh, basis.as_ref())?;
    let specs = vec![
        SplitSpec {
            name: "train".into(),
            cameras: ctx.cfg.dataset.train.cameras()?,
        },
        SplitSpec {
            name: "test".into(),
            cameras: ctx.cfg.dataset.test.cameras()?,
        },
    ];
    let splits = make_dataset(&mesh, &bound, &specs)?;
    println!("{:<6} {:>7} {:>9}", "split", "cameras", "samples");
    for s in &splits {
        let dir = out.join(&s.name);
        ctx.write(&dir.join("cameras.json"), &json_bytes(&s.cameras)?)?;
        for (k, (cam, r)) in s.cameras.iter().zip(&s.renderings).enumerate() {
            let p = dir.join(view_name(k));
            r.image.save_png(&p)?;
            ctx.wrote(&p)?;
            let m = dir.join(format!("mask_{k:03}.png"));
            save_mask_png(&r.mask, cam.width, cam.height, &m)?;
            ctx.wrote(&m)?;
        }
        println!("{:<6} {:>7} {:>9}", s.name, s.cameras.len(), s.samples.len());
    }
    Ok(())
}

pub fn eigens(ctx: &mut Ctx) -> Result<()> {
    let mesh = ctx.mesh()?;
    let d = ctx.cfg.eigens.d;
    let basis = EigenBasis::compute(&mesh, d, ctx.cfg.seeds.basis)?.bound_to(&mesh);
    let out = ctx.stage("eigens");
    ctx.write(&out.join("basis.infbasis"), &basis.to_bytes()?)?;
    let residuals = &basis.solver().residuals;
    let mut csv = String::from("index,lambda,relative_residual\n");
    println!(
        "# {} vertices, d = {d}, solver {} ({} iterations)",
        mesh.num_vertices(),
        basis.solver().method,
        basis.solver().iterations
    );
    println!("{:>5} {:>16} {:>12}", "index", "lambda", "residual");
    for (i, l) in basis.lambdas().iter().enumerate() {
        let r = residuals.get(i).copied().unwrap_or(f64::NAN);
        writeln!(csv, "{i},{l},{r}")?;
        println!("{i:>5} {l:>16.8} {r:>12.3e}");
    }
    let groups: Vec<usize> = basis.degenerate_groups(1e-2).iter().map(|g| g.len()).collect();
    println!("# multiplicities (1% tolerance): {groups:?}");
    ctx.write(&out.join("spectrum.csv"), csv.as_bytes())
}

pub fn train_cmd(ctx: &mut Ctx) -> Result<()> {
    let mesh = ctx.mesh()?;
    let choice = ctx.cfg.embedding();
    let basis = if choice.needs_basis() { Some(ctx.basis(&mesh)?) } else { None };
    let spec = choice.resolve(basis.as_ref(), ctx.cfg.seeds.embedding)?;
    let (cams, images) = ctx.split("train")?;
    let samples = precompute_samples(&mesh, &cams, &images)?;
    ensure!(!samples.is_empty(), "no training camera sees the mesh");
    let view_encoding = ctx.cfg.mlp.view_encoding.clone();
    let data = {
        let emb = bind(&spec, basis.as_ref(), &mesh)?;
        samples.training_data(emb.as_ref(), view_encoding.as_ref())?
    };
    let config = ctx.cfg.mlp.config(spec.output_dim(), ctx.cfg.seeds.init)?;
    let tcfg = ctx.cfg.train_config();
    info!("training {} parameters on {} samples", config.num_params(), data.len());
    let params = MlpParams::init(&config)?;
    let outcome = train(params, &data, &tcfg, |step, loss| {
        if step % 100 == 0 {
            info!("step {step} loss {loss:.5}");
        }
    })?;
    let meta = ModelMeta {
        config,
        embedding: spec.clone(),
        view_encoding,
        mesh_hash: Some(mesh.content_hash()),
        basis_hash: basis.as_ref().filter(|_| matches!(spec, EmbeddingSpec::Intrinsic(_))).map(|b| b.content_hash()),
        training: serde_json::to_value(&tcfg)?,
    };
    let model = FieldModel::new(meta, outcome.params)?;
    let out = ctx.stage("train");
    ctx.write(&out.join("model.infmodel"), &model.to_bytes()?)?;
    let mut csv = String::from("step,loss\n");
    for (i, l) in outcome.step_losses.iter().enumerate() {
        writeln!(csv, "{i},{l}")?;
    }
    ctx.write(&out.join("loss.csv"), csv.as_bytes())?;
    let last = outcome.history.last().map(|h| h.mean_loss).unwrap_or(f64::NAN);
    println!(
        "trained {} steps on {} samples; final epoch loss {last:.6}",
        outcome.step_losses.len(),
        data.len()
    );
    Ok(())
}

fn metric_value(m: Metric, pred: &Image, gt: &Image, mask: &[bool]) -> Result<f64> {
    Ok(match m {
        Metric::Psnr => psnr(pred, gt, mask)?,
        Metric::Dssim => dssim(pred, gt, mask)?,
        Metric::Mse => masked_mse(pred, gt, mask)?,
        Metric::Mae => masked_mae(pred, gt, mask)?,
    })
}

/// Per-view metric rows plus a `mean` row, as CSV and as a printed table.
fn metric_table(metrics: &[Metric], rows: &[(String, Vec<f64>)]) -> Result<String> {
    let mut csv = String::from("view");
    for m in metrics {
        write!(csv, ",{}", m.name())?;
    }
    csv.push('\n');
    print!("{:<10}", "view");
    for m in metrics {
        print!(" {:>10}", m.name());
    }
    println!();
    let mut means = vec![0.0; metrics.len()];
    let line = |name: &str, vals: &[f64], csv: &mut String| -> Result<()> {
        csv.push_str(name);
        print!("{name:<10}");
        for v in vals {
            write!(csv, ",{v}")?;
            print!(" {v:>10.4}");
        }
        csv.push('\n');
        println!();
        Ok(())
    };
    for (name, vals) in rows {
        for (m, v) in means.iter_mut().zip(vals) {
            *m += v / rows.len() as f64;
        }
        line(name, vals, &mut csv)?;
    }
    line("mean", &means, &mut csv)?;
    Ok(csv)
}

fn and_masks(a: &[bool], b: &[bool]) -> Vec<bool> {
    a.iter().zip(b).map(|(x, y)| *x && *y).collect()
}

pub fn render(ctx: &mut Ctx, split: &str, camera: Option<usize>) -> Result<()> {
    let mesh = ctx.mesh()?;
    let model = ctx.model()?;
    let basis = match model.meta.embedding {
        EmbeddingSpec::Intrinsic(_) => Some(ctx.basis(&mesh)?),
        _ => None,
    };
    let field = NeuralField::new(&model, basis.as_ref(), &mesh)?;
    let cams = ctx.cfg.dataset.split(split)?.cameras()?;
    let picked: Vec<usize> = match camera {
        Some(k) if k < cams.len() => vec![k],
        Some(k) => bail!("camera {k} out of range: split '{split}' has {} cameras", cams.len()),
        None => (0..cams.len()).collect(),
    };
    let gt_dir = ctx.stage("gen-data").join(split);
    let out = ctx.stage("render");
    std::fs::create_dir_all(&out)?;
    let metrics = ctx.cfg.metrics.clone();
    let mut rows = Vec::new();
    for k in picked {
        let r = render_view(&field, &mesh, &cams[k], WHITE)?;
        let p = out.join(format!("{split}_{k:03}.png"));
        r.image.save_png(&p)?;
        ctx.wrote(&p)?;
        let gt_path = gt_dir.join(view_name(k));
        if gt_path.is_file() {
            ctx.prov.input_file(&gt_path)?;
            let gt = Image::load_png(&gt_path)?;
            let vals = metrics
                .iter()
                .map(|&m| metric_value(m, &r.image, &gt, &r.mask))
                .collect::<Result<Vec<_>>>()?;
            rows.push((format!("{split}_{k:03}"), vals));
        }
    }
    if rows.is_empty() {
        println!("rendered without ground truth; run `gen-data` for metrics");
        return Ok(());
    }
    let csv = metric_table(&metrics, &rows)?;
    ctx.write(&out.join(format!("metrics_{split}.csv")), csv.as_bytes())
}

#[derive(Serialize)]
struct KernelScore {
    embedding: String,
    offdiag_ratio: f64,
    min_diag: f64,
}

pub fn ntk(ctx: &mut Ctx) -> Result<()> {
    let mesh = ctx.mesh()?;
    let n = mesh.num_vertices();
    ensure!(
        n <= ctx.cfg.ntk.max_vertices,
        "mesh has {n} vertices, above ntk.max_vertices = {}; the kernel is dense",
        ctx.cfg.ntk.max_vertices
    );
    let basis = ctx.basis(&mesh)?;
    let mut choices = ctx.cfg.ntk.embeddings.clone();
    if choices.is_empty() {
        choices.push(ctx.cfg.embedding());
    }
    let kcfg = ctx.cfg.ntk.kernel.clone();
    let out = ctx.stage("ntk");
    std::fs::create_dir_all(&out)?;
    let mut scores = Vec::new();
    println!("{:<24} {:>14} {:>12}", "embedding", "offdiag_ratio", "min_diag");
    for choice in &choices {
        let label = choice.label();
        let spec = choice.resolve(Some(&basis), ctx.cfg.seeds.embedding)?;
        let emb = bind(&spec, Some(&basis), &mesh)?;
        let kernel = ntk_matrix(&embed_vertices(emb.as_ref(), &mesh), &kcfg, &label)?;
        let coeffs = stationarity_coeffs(&kernel.values, &basis)?;
        let s = stationarity_score(&coeffs);
        ctx.write(&out.join(format!("{label}.infkern")), &kernel.to_bytes()?)?;
        ctx.write(&out.join(format!("{label}.infcij")), &coeffs.to_bytes()?)?;
        for (name, m) in [("kernel", &kernel.values), ("cij", &coeffs.c.abs())] {
            let p = out.join(format!("{label}_{name}.png"));
            save_heatmap(m, &p)?;
            ctx.wrote(&p)?;
            ctx.wrote(&p.with_file_name(format!("{label}_{name}.png.json")))?;
        }
        println!("{label:<24} {:>14.4e} {:>12.4e}", s.offdiag_ratio, s.min_diag);
        scores.push(KernelScore {
            embedding: label,
            offdiag_ratio: s.offdiag_ratio,
            min_diag: s.min_diag,
        });
    }
    ctx.write(&out.join("scores.json"), &json_bytes(&scores)?)
}

pub fn transfer(ctx: &mut Ctx, p2p: Option<&Path>) -> Result<()> {
    let section = ctx.cfg.transfer.clone().context("config has no `transfer` section")?;
    let source = ctx.mesh()?;
    let basis_src = ctx.basis(&source)?;
    let model = ctx.model()?;
    if let Some(p) = section.target.file() {
        ctx.prov.input_file(p)?;
    }
    let target = section.target.build()?;
    let out = ctx.stage("transfer");
    let basis_tgt = EigenBasis::compute(&target, basis_src.d(), ctx.cfg.seeds.basis)?.bound_to(&target);
    ctx.write(&out.join("target_basis.infbasis"), &basis_tgt.to_bytes()?)?;

    let file = p2p.map(Path::to_path_buf).or(match &section.correspondence {
        CorrespondenceSource::File { path } => Some(path.clone()),
        _ => None,
    });
    let corr = match (&file, &section.correspondence) {
        (Some(path), _) => Correspondence::from_bytes(&ctx.prov.read(path)?)?,
        (None, CorrespondenceSource::Identity) => {
            ensure!(
                source.num_vertices() == target.num_vertices(),
                "identity correspondence needs equal vertex counts ({} vs {})",
                source.num_vertices(),
                target.num_vertices()
            );
            let map: Vec<usize> = (0..target.num_vertices()).collect();
            Correspondence::from_vertex_map(&source, &map)?.bound_to(&source, &target)
        }
        (None, CorrespondenceSource::Radial { center }) => radial_correspondence(&source, &target, Vec3::from(*center))?,
        (None, CorrespondenceSource::File { .. }) => unreachable!("file path resolved above"),
    };
    corr.validate(&source, &target)?;
    if file.is_none() {
        ctx.write(&out.join("p2p.infp2p"), &corr.to_bytes()?)?;
    }
    let fmap = fmap_from_p2p(&corr, &source, &basis_src, &target, &basis_tgt, section.projection)?;
    let mut csv = String::new();
    for row in fmap.c.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        csv.push_str(&cells.join(","));
        csv.push('\n');
    }
    ctx.write(&out.join("fmap.csv"), csv.as_bytes())?;

    let cams = match &section.cameras {
        Some(rig) => rig.cameras()?,
        None => ctx.cfg.dataset.test.cameras()?,
    };
    // reference: the model on its own shape from the same cameras
    let field = NeuralField::new(&model, Some(&basis_src), &source)?;
    let mut rows = Vec::new();
    for (k, cam) in cams.iter().enumerate() {
        let tr = render_transferred(&model, &fmap, &basis_tgt, &target, cam, WHITE)?;
        let p = out.join(view_name(k));
        tr.image.save_png(&p)?;
        ctx.wrote(&p)?;
        let src: Rendering = render_view(&field, &source, cam, WHITE)?;
        let mask = and_masks(&tr.mask, &src.mask);
        let vals = ctx
            .cfg
            .metrics
            .iter()
            .map(|&m| metric_value(m, &tr.image, &src.image, &mask))
            .collect::<Result<Vec<_>>>()?;
        rows.push((format!("view_{k:03}"), vals));
    }
    println!("transferred vs source rendering:");
    let table = metric_table(&ctx.cfg.metrics.clone(), &rows)?;
    ctx.write(&out.join("metrics.csv"), table.as_bytes())
}

#[derive(Serialize)]
struct BenchSummary {
    name: String,
    train_mse: f64,
    eval_mse: f64,
    near_touch_max_error: f64,
}

pub fn bench1d(ctx: &mut Ctx) -> Result<()> {
    let report = run_benchmark(&ctx.cfg.bench1d)?;
    let out = ctx.stage("bench1d");
    ctx.write(&out.join("bench1d.csv"), report.to_csv().as_bytes())?;
    let plot = out.join("bench1d.png");
    report.save_plot(&plot, 900, 400)?;
    ctx.wrote(&plot)?;
    let summary: Vec<BenchSummary> = report
        .results
        .iter()
        .map(|r| BenchSummary {
            name: r.name.clone(),
            train_mse: r.train_mse,
            eval_mse: r.eval_mse,
            near_touch_max_error: r.near_touch_max_error,
        })
        .collect();
    println!("{:<20} {:>12} {:>12} {:>16}", "embedding", "train_mse", "eval_mse", "near_touch_max");
    for s in &summary {
        println!("{:<20} {:>12.4e} {:>12.4e} {:>16.4}", s.name, s.train_mse, s.eval_mse, s.near_touch_max_error);
    }
    ctx.write(&out.join("summary.json"), &json_bytes(&summary)?)
}
