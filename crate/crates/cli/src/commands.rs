use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use pkt_core::gradcheck::{self, GradcheckConfig, KernelFamily};
use pkt_core::{io, KernelSpec, PktError, RetrievalIndex, StudentModel, TrainConfig};

use crate::{
    EmbedArgs, EvalArgs, GradcheckArgs, GradcheckKernel, KernelArg, QmiArgs, TransferArgs,
};

/// 2 for I/O failures, 1 for everything else. A missing input file counts
/// as a bad argument rather than an I/O failure.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let io_kind = err
        .chain()
        .find_map(|c| match c.downcast_ref::<PktError>() {
            Some(PktError::Io(e)) => Some(e.kind()),
            _ => c.downcast_ref::<std::io::Error>().map(std::io::Error::kind),
        });
    match io_kind {
        Some(std::io::ErrorKind::NotFound) | None => 1,
        Some(_) => 2,
    }
}

fn kernel_spec(kind: KernelArg, width: Option<f64>, flag: &str) -> Result<KernelSpec> {
    match kind {
        KernelArg::Cosine => Ok(KernelSpec::Cosine),
        KernelArg::Gaussian => {
            let w = width.with_context(|| format!("--kernel gaussian requires {flag}"))?;
            Ok(KernelSpec::gaussian(w)?)
        }
    }
}

fn load_features(path: &Path) -> Result<pkt_core::FeatureMatrix> {
    io::load_features(path).with_context(|| format!("reading features from {}", path.display()))
}

fn load_labels(path: &Path) -> Result<Vec<usize>> {
    io::load_labels(path).with_context(|| format!("reading labels from {}", path.display()))
}

pub fn transfer(a: &TransferArgs) -> Result<u8> {
    if a.sup_weight > 0.0 && a.labels.is_none() {
        bail!("--sup-weight {} requires --labels", a.sup_weight);
    }
    if a.arch.is_empty() {
        bail!("--arch needs at least one layer width");
    }
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        lr: a.lr,
        teacher_spec: kernel_spec(a.kernel, a.sigma_t, "--sigma-t")?,
        student_spec: kernel_spec(a.kernel, a.sigma_s, "--sigma-s")?,
        sup_weight: a.sup_weight,
        seed: a.seed,
        log_every: a.log_every,
    };
    cfg.validate()?;

    let inputs = load_features(&a.input)?;
    let teacher = load_features(&a.teacher)?;
    if inputs.rows() != teacher.rows() {
        bail!(
            "--input has {} rows but --teacher has {}",
            inputs.rows(),
            teacher.rows()
        );
    }
    let labels = match (&a.labels, a.sup_weight > 0.0) {
        (Some(p), true) => {
            let l = load_labels(p)?;
            if l.len() != inputs.rows() {
                bail!(
                    "--labels has {} entries but --input has {} rows",
                    l.len(),
                    inputs.rows()
                );
            }
            Some(l)
        }
        _ => None,
    };

    let dims: Vec<usize> = std::iter::once(inputs.dim())
        .chain(a.arch.iter().copied())
        .collect();
    let model = StudentModel::new(&dims, a.seed)?;
    log::info!("training student {dims:?} on {} samples", inputs.rows());
    let (model, trace) = pkt_core::train(model, &inputs, &teacher, labels.as_deref(), &cfg)?;

    io::save_model(&a.out, &model)
        .with_context(|| format!("writing model to {}", a.out.display()))?;
    if let Some(path) = &a.loss_log {
        let mut w = BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        );
        io::write_loss_trace(&mut w, &trace)?;
        w.flush()?;
    }
    if let Some(last) = trace.last() {
        log::info!("final batch loss {:.6}", last.loss);
    }
    Ok(0)
}

pub fn embed(a: &EmbedArgs) -> Result<u8> {
    let model = io::load_model(&a.model)
        .with_context(|| format!("reading model from {}", a.model.display()))?;
    let inputs = load_features(&a.input)?;
    let out = model.forward(&inputs).with_context(|| {
        format!(
            "model expects {} inputs, file has {}",
            model.input_dim(),
            inputs.dim()
        )
    })?;
    io::save_features(&a.out, &out)
        .with_context(|| format!("writing embeddings to {}", a.out.display()))?;
    Ok(0)
}

pub fn eval(a: &EvalArgs) -> Result<u8> {
    let db = load_features(&a.db)?;
    let db_labels = load_labels(&a.db_labels)?;
    let queries = load_features(&a.queries)?;
    let query_labels = load_labels(&a.query_labels)?;
    if db.dim() != queries.dim() {
        bail!(
            "database dimension {} differs from query dimension {}",
            db.dim(),
            queries.dim()
        );
    }
    let index =
        RetrievalIndex::new(db, db_labels).context("database labels do not match database rows")?;
    let result = pkt_core::evaluate(&index, &queries, &query_labels, &a.top_k)?;

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "mAP {:.4}", 100.0 * result.map)?;
    for (k, p) in &result.top_k {
        writeln!(out, "t-{k} {:.4}", 100.0 * p)?;
    }
    if result.skipped > 0 {
        eprintln!(
            "warning: {} queries had no relevant database item and were skipped",
            result.skipped
        );
    }
    Ok(0)
}

pub fn qmi(a: &QmiArgs) -> Result<u8> {
    let spec = kernel_spec(a.kernel, a.sigma, "--sigma")?;
    let feats = load_features(&a.features)?;
    let labels = load_labels(&a.labels)?;
    let p = pkt_core::information_potentials(&feats, &labels, &spec)?;
    println!("v_in {:.15}", p.v_in);
    println!("v_all {:.15}", p.v_all);
    println!("v_btw {:.15}", p.v_btw);
    println!("qmi {:.15}", p.qmi);
    Ok(0)
}

pub fn gradcheck(a: &GradcheckArgs) -> Result<u8> {
    if a.n.is_some_and(|n| n < 2) {
        bail!("--n must be at least 2");
    }
    if a.dim == Some(0) {
        bail!("--dim must be at least 1");
    }
    if a.instances == 0 {
        bail!("--instances must be at least 1");
    }
    let kernels = match a.kernel {
        GradcheckKernel::Cosine => vec![KernelFamily::Cosine],
        GradcheckKernel::Gaussian => vec![KernelFamily::Gaussian],
        GradcheckKernel::Both => vec![KernelFamily::Cosine, KernelFamily::Gaussian],
    };
    let cfg = GradcheckConfig {
        seed: a.seed,
        instances: a.instances,
        n: a.n,
        dim: a.dim,
        kernels,
        corrupt_sign: a.corrupt_sign,
        ..Default::default()
    };
    let summary = gradcheck::run(&cfg)?;
    for r in &summary.instances {
        log::info!(
            "{:?} n={} dim={} supervised={} max_rel_error={:.3e}",
            r.kernel,
            r.n,
            r.dim,
            r.supervised,
            r.max_rel_error
        );
    }
    println!("instances {}", summary.instances.len());
    println!("max_rel_error {:e}", summary.max_rel_error);
    Ok(if summary.passed() { 0 } else { 1 })
}
