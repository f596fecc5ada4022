//! On-disk layouts for datasets, single images and attack results.

use std::path::{Path, PathBuf};

use salattack_core::attack::AttackResult;
use salattack_core::data::Sample;
use salattack_core::Tensor;

use crate::error::{write, Error, Result};
use crate::{pnm, sft};

/// Loads an image or map by extension: `.sft`, `.ppm` or `.pgm`.
pub fn load_tensor(path: &Path) -> Result<Tensor> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("sft") => sft::load(path),
        Some("ppm") => pnm::load_ppm(path),
        Some("pgm") => pnm::load_pgm(path),
        _ => Err(Error::format(path, "expected a .sft, .ppm or .pgm file")),
    }
}

/// Writes each sample as `sampleNNNN.image.sft` and `sampleNNNN.saliency.sft`,
/// with `.ppm`/`.pgm` previews when `previews` is set. Returns the image paths.
pub fn save_dataset(dir: &Path, samples: &[Sample], previews: bool) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let stem = dir.join(format!("sample{i:04}"));
        let image = stem.with_extension("image.sft");
        sft::save(&image, &s.image)?;
        sft::save(&stem.with_extension("saliency.sft"), &s.saliency)?;
        if previews {
            pnm::save_ppm(&stem.with_extension("image.ppm"), &s.image)?;
            pnm::save_pgm(&stem.with_extension("saliency.pgm"), &s.saliency)?;
        }
        paths.push(image);
    }
    Ok(paths)
}

/// Reads back a directory written by [`save_dataset`], in index order.
pub fn load_dataset(dir: &Path) -> Result<Vec<(Tensor, Tensor)>> {
    let mut out = Vec::new();
    loop {
        let stem = dir.join(format!("sample{:04}", out.len()));
        let image = stem.with_extension("image.sft");
        if !image.is_file() {
            break;
        }
        out.push((sft::load(&image)?, sft::load(&stem.with_extension("saliency.sft"))?));
    }
    if out.is_empty() {
        return Err(Error::format(dir, "no sample0000.image.sft in dataset directory"));
    }
    Ok(out)
}

/// CSV log: one row per iteration with loss, d1 and per-channel max |delta|.
pub fn encode_log(result: &AttackResult) -> Result<Vec<u8>> {
    let channels = result.log.first().map_or(0, |r| r.max_abs_delta.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["iteration".to_string(), "loss".into(), "d1".into()];
    header.extend((0..channels).map(|c| format!("max-abs-delta-{c}")));
    w.write_record(&header)?;
    for r in &result.log {
        let mut row = vec![r.iteration.to_string(), r.loss.to_string(), r.d1.to_string()];
        row.extend(r.max_abs_delta.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::Invalid(e.to_string()))
}

/// Writes `perturbation.sft`, `adversarial.sft`, `log.csv` and a
/// `adversarial.ppm` preview into `dir`.
pub fn save_attack(dir: &Path, result: &AttackResult) -> Result<()> {
    sft::save(&dir.join("perturbation.sft"), &result.perturbation)?;
    sft::save(&dir.join("adversarial.sft"), &result.adversarial)?;
    write(&dir.join("log.csv"), &encode_log(result)?)?;
    pnm::save_ppm(&dir.join("adversarial.ppm"), &result.adversarial)
}
