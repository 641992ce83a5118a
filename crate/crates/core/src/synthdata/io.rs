//! On-disk layout:
//!
//! ```text
//! <root>/manifest.jsonl          one {id, split, spec_hash, seed} per pair
//! <root>/specs.json              {"source": SceneSpec, "target": SceneSpec}
//! <root>/<split>/<id>/frame1.png 16-bit RGB
//! <root>/<split>/<id>/frame2.png
//! <root>/<split>/<id>/flow.flo   labelled splits only
//! <root>/<split>/<id>/occlusion.png   8-bit, 255 = visible; labelled only
//! ```

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, Rgb};
use serde::{Deserialize, Serialize};

use super::{DomainPairs, LabeledPair, SceneSpec, Split, UnlabeledPair};
use crate::error::{Error, Result};
use crate::flowcore::{read_flow_file, write_flow_file, BinaryMask, Image};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
const SPECS_FILE: &str = "specs.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    pub spec_hash: String,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Specs {
    source: SceneSpec,
    target: SceneSpec,
}

fn codec(path: &Path, e: image::ImageError) -> Error {
    Error::Codec(format!("{}: {e}", path.display()))
}

fn write_rgb16(path: &Path, img: &Image) -> Result<()> {
    let rgb = img.to_rgb();
    let (h, w) = rgb.size();
    let buf = ImageBuffer::<Rgb<u16>, Vec<u16>>::from_fn(w as u32, h as u32, |x, y| {
        Rgb([0, 1, 2].map(|c| (rgb.get(c, y as usize, x as usize) * 65535.0).round() as u16))
    });
    buf.save(path).map_err(|e| codec(path, e))
}

fn read_rgb(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|e| codec(path, e))?.into_rgb16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0.0; 3 * h * w];
    for (x, y, p) in img.enumerate_pixels() {
        for c in 0..3 {
            data[c * h * w + y as usize * w + x as usize] = p.0[c] as f64 / 65535.0;
        }
    }
    Image::new(3, h, w, data)
}

fn write_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    let (h, w) = mask.size();
    let buf = GrayImage::from_fn(w as u32, h as u32, |x, y| {
        Luma([if mask.get(y as usize, x as usize) { 255 } else { 0 }])
    });
    buf.save(path).map_err(|e| codec(path, e))
}

fn read_mask(path: &Path) -> Result<BinaryMask> {
    let img = image::open(path).map_err(|e| codec(path, e))?.into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    BinaryMask::new(h, w, img.pixels().map(|p| p.0[0] >= 128).collect())
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes all three splits under `root`, creating it if needed.
pub fn write_dataset(root: &Path, pairs: &DomainPairs, source: &SceneSpec, target: &SceneSpec) -> Result<()> {
    create_dir(root)?;
    let specs = serde_json::to_string_pretty(&Specs {
        source: source.clone(),
        target: target.clone(),
    })
    .expect("specs serialize");
    let specs_path = root.join(SPECS_FILE);
    fs::write(&specs_path, specs).map_err(|e| Error::io(&specs_path, e))?;

    let mut manifest = Vec::new();
    let mut write_pair = |split: Split,
                          spec: &SceneSpec,
                          id: &str,
                          seed: u64,
                          i1: &Image,
                          i2: &Image,
                          labels: Option<&LabeledPair>|
     -> Result<()> {
        let dir = root.join(split.name()).join(id);
        create_dir(&dir)?;
        write_rgb16(&dir.join("frame1.png"), i1)?;
        write_rgb16(&dir.join("frame2.png"), i2)?;
        if let Some(p) = labels {
            write_flow_file(dir.join("flow.flo"), &p.gt_flow)?;
            write_mask(&dir.join("occlusion.png"), &p.gt_occlusion)?;
        }
        let entry = ManifestEntry {
            id: id.to_string(),
            split,
            spec_hash: spec.hash(),
            seed,
        };
        manifest.push(serde_json::to_string(&entry).expect("entry serializes"));
        Ok(())
    };
    for p in &pairs.source {
        write_pair(Split::Source, source, &p.id, p.seed, &p.i1, &p.i2, Some(p))?;
    }
    for p in &pairs.target_train {
        write_pair(Split::TargetTrain, target, &p.id, p.seed, &p.i1, &p.i2, None)?;
    }
    for p in &pairs.target_eval {
        write_pair(Split::TargetEval, target, &p.id, p.seed, &p.i1, &p.i2, Some(p))?;
    }
    let path = root.join(MANIFEST_FILE);
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    for line in manifest {
        writeln!(f, "{line}").map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Reads a dataset written by [`write_dataset`], with the specs it was
/// generated from.
pub fn read_dataset(root: &Path) -> Result<(DomainPairs, SceneSpec, SceneSpec)> {
    let specs_path = root.join(SPECS_FILE);
    let text = fs::read_to_string(&specs_path).map_err(|e| Error::io(&specs_path, e))?;
    let specs: Specs =
        serde_json::from_str(&text).map_err(|e| Error::Codec(format!("{}: {e}", specs_path.display())))?;
    let path = root.join(MANIFEST_FILE);
    let f = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut pairs = DomainPairs::default();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry =
            serde_json::from_str(&line).map_err(|e| Error::Codec(format!("{}:{}: {e}", path.display(), n + 1)))?;
        let spec = if entry.split == Split::Source {
            &specs.source
        } else {
            &specs.target
        };
        if entry.spec_hash != spec.hash() {
            return Err(Error::Codec(format!(
                "{}: spec hash mismatch for {}",
                path.display(),
                entry.id
            )));
        }
        let dir = root.join(entry.split.name()).join(&entry.id);
        let (i1, i2) = (read_rgb(&dir.join("frame1.png"))?, read_rgb(&dir.join("frame2.png"))?);
        if entry.split == Split::TargetTrain {
            pairs.target_train.push(UnlabeledPair {
                id: entry.id,
                seed: entry.seed,
                i1,
                i2,
            });
            continue;
        }
        let gt_flow = read_flow_file(dir.join("flow.flo"))?;
        let (h, w) = gt_flow.size();
        let pair = LabeledPair {
            id: entry.id,
            seed: entry.seed,
            i1,
            i2,
            gt_flow,
            gt_occlusion: read_mask(&dir.join("occlusion.png"))?,
            gt_valid: BinaryMask::ones(h, w),
        };
        match entry.split {
            Split::Source => pairs.source.push(pair),
            _ => pairs.target_eval.push(pair),
        }
    }
    Ok((pairs, specs.source, specs.target))
}
