use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::codec;
use crate::layer::{LayerKind, RgbaLayer};
use crate::prompt::Prompt;
use crate::raster::{BBox, Image};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quality {
    Good,
    Neutral,
    Poor,
}

/// On-disk prompt encoding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PromptSpec {
    Point { value: [usize; 2] },
    Box { value: [usize; 4] },
    Mask { path: String },
    Text { value: String },
    Background,
    Combo { text: String, spatial: Box<PromptSpec> },
}

impl PromptSpec {
    /// Materialises the prompt; mask paths are resolved against `root`.
    pub fn resolve(&self, root: &Path) -> Result<Prompt, DatasetError> {
        Ok(match self {
            PromptSpec::Point { value: [x, y] } => Prompt::Point { x: *x, y: *y },
            PromptSpec::Box { value: [x0, y0, x1, y1] } => Prompt::Box(BBox {
                x0: *x0,
                y0: *y0,
                x1: *x1,
                y1: *y1,
            }),
            PromptSpec::Mask { path } => {
                let p = root.join(path);
                if !p.exists() {
                    return Err(DatasetError::MissingFile(p));
                }
                Prompt::Mask(codec::read_mask(&p)?)
            }
            PromptSpec::Text { value } => Prompt::Text(value.clone()),
            PromptSpec::Background => Prompt::Background,
            PromptSpec::Combo { text, spatial } => Prompt::Combo {
                text: text.clone(),
                spatial: Box::new(spatial.resolve(root)?),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub id: String,
    pub kind: LayerKind,
    pub rgba_path: String,
    pub visibility_path: String,
    #[serde(default)]
    pub prompts: Vec<PromptSpec>,
    /// Human occlusion label; computed from the masks when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occluded: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<Quality>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub salient: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: String,
    pub image_path: String,
    #[serde(default)]
    pub background_path: Option<String>,
    pub layers: Vec<LayerEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub samples: Vec<SampleEntry>,
}

impl DatasetManifest {
    pub fn new(samples: Vec<SampleEntry>) -> Self {
        DatasetManifest {
            version: MANIFEST_VERSION,
            samples,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedLayer {
    pub entry: LayerEntry,
    pub layer: RgbaLayer,
    pub prompts: Vec<Prompt>,
    /// Visibility pixels cleared because they fell outside the alpha support.
    pub clipped: usize,
}

impl LoadedLayer {
    pub fn id(&self) -> &str {
        &self.entry.id
    }
}

#[derive(Debug, Clone)]
pub struct LoadedSample {
    pub entry: SampleEntry,
    pub height: usize,
    pub width: usize,
    pub background: Option<Image>,
    pub layers: Vec<LoadedLayer>,
}

impl LoadedSample {
    pub fn id(&self) -> &str {
        &self.entry.id
    }

    pub fn foreground(&self) -> impl Iterator<Item = &LoadedLayer> {
        self.layers.iter().filter(|l| l.layer.kind() == LayerKind::Foreground)
    }
}

/// A validated manifest with every referenced layer decoded.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub manifest: DatasetManifest,
    pub root: PathBuf,
    pub samples: Vec<LoadedSample>,
}

impl LoadedDataset {
    pub fn sample(&self, id: &str) -> Option<&LoadedSample> {
        self.samples.iter().find(|s| s.id() == id)
    }

    pub fn layers(&self) -> impl Iterator<Item = (&LoadedSample, &LoadedLayer)> {
        self.samples.iter().flat_map(|s| s.layers.iter().map(move |l| (s, l)))
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }
}

fn existing(root: &Path, rel: &str) -> Result<PathBuf, DatasetError> {
    let p = root.join(rel);
    if !p.is_file() {
        return Err(DatasetError::MissingFile(p));
    }
    Ok(p)
}

fn load_layer(root: &Path, sample: &SampleEntry, dims: (usize, usize), entry: &LayerEntry) -> Result<LoadedLayer, DatasetError> {
    let (rgb, alpha) = codec::read_rgba(&existing(root, &entry.rgba_path)?)?;
    let vis = codec::read_mask(&existing(root, &entry.visibility_path)?)?;
    for (what, got) in [("rgba", rgb.dims()), ("visibility", vis.dims())] {
        if got != dims {
            return Err(DatasetError::violation(
                &sample.id,
                Some(&entry.id),
                format!("{what} is {got:?}, image is {dims:?}"),
            ));
        }
    }
    let (layer, clipped) =
        RgbaLayer::new_lenient(rgb, alpha, vis, entry.kind).map_err(|e| DatasetError::layer_error(&sample.id, &entry.id, e))?;
    if entry.kind == LayerKind::Foreground && layer.alpha().tight_bbox(0.0).is_err() {
        return Err(DatasetError::violation(&sample.id, Some(&entry.id), "foreground alpha is empty"));
    }
    let prompts = entry
        .prompts
        .iter()
        .map(|p| {
            let p = p.resolve(root)?;
            p.validate(dims.0, dims.1)
                .map_err(|e| DatasetError::prompt_error(&sample.id, &entry.id, e))?;
            Ok(p)
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;
    Ok(LoadedLayer {
        entry: entry.clone(),
        layer,
        prompts,
        clipped,
    })
}

fn load_sample(root: &Path, entry: &SampleEntry) -> Result<LoadedSample, DatasetError> {
    if entry.layers.is_empty() {
        return Err(DatasetError::violation(&entry.id, None, "sample has no layers"));
    }
    let image_path = existing(root, &entry.image_path)?;
    let (w, h) = image::image_dimensions(&image_path).map_err(|e| codec::CodecError::Image {
        path: image_path.display().to_string(),
        source: e,
    })?;
    let dims = (h as usize, w as usize);
    let background = match &entry.background_path {
        Some(rel) => {
            let bg = codec::read_rgb(&existing(root, rel)?)?;
            if bg.dims() != dims {
                return Err(DatasetError::violation(
                    &entry.id,
                    None,
                    format!("background is {:?}, image is {dims:?}", bg.dims()),
                ));
            }
            Some(bg)
        }
        None => None,
    };
    let mut seen = HashSet::new();
    let mut layers = Vec::with_capacity(entry.layers.len());
    for l in &entry.layers {
        if !seen.insert(l.id.as_str()) {
            return Err(DatasetError::violation(&entry.id, Some(&l.id), "duplicate layer id"));
        }
        layers.push(load_layer(root, entry, dims, l)?);
    }
    Ok(LoadedSample {
        entry: entry.clone(),
        height: dims.0,
        width: dims.1,
        background,
        layers,
    })
}

/// Parses and fully validates a manifest, decoding every layer.
pub fn load_manifest(path: &Path) -> Result<LoadedDataset, DatasetError> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => DatasetError::MissingFile(path.to_path_buf()),
        _ => DatasetError::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|source| DatasetError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    if manifest.version != MANIFEST_VERSION {
        return Err(DatasetError::UnsupportedVersion(manifest.version));
    }
    let mut ids = HashSet::new();
    for s in &manifest.samples {
        if !ids.insert(s.id.as_str()) {
            return Err(DatasetError::violation(&s.id, None, "duplicate sample id"));
        }
    }
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();

    #[cfg(feature = "parallel")]
    let samples = {
        use rayon::prelude::*;
        manifest
            .samples
            .par_iter()
            .map(|s| load_sample(&root, s))
            .collect::<Result<Vec<_>, _>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let samples = manifest
        .samples
        .iter()
        .map(|s| load_sample(&root, s))
        .collect::<Result<Vec<_>, _>>()?;

    for s in &samples {
        for l in s.layers.iter().filter(|l| l.clipped > 0) {
            log::warn!("sample `{}` layer `{}`: cleared {} stray visibility pixels", s.id(), l.id(), l.clipped);
        }
    }
    Ok(LoadedDataset { manifest, root, samples })
}

/// Writes the manifest JSON (not the images it references).
pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<(), DatasetError> {
    let json = serde_json::to_string_pretty(manifest).expect("manifest serialises");
    fs::write(path, json + "\n").map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Staging directory that becomes `target` only on [`AtomicDir::commit`].
/// Dropping it uncommitted removes the staging directory.
pub struct AtomicDir {
    staging: PathBuf,
    target: PathBuf,
    committed: bool,
}

impl AtomicDir {
    pub fn create(target: &Path) -> Result<Self, DatasetError> {
        if target.exists() {
            return Err(DatasetError::Io {
                path: target.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::AlreadyExists, "output directory already exists"),
            });
        }
        let name = target.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let staging = target.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
        if staging.exists() {
            let _ = fs::remove_dir_all(&staging);
        }
        fs::create_dir_all(&staging).map_err(|source| DatasetError::Io {
            path: staging.clone(),
            source,
        })?;
        Ok(AtomicDir {
            staging,
            target: target.to_path_buf(),
            committed: false,
        })
    }

    pub fn path(&self) -> &Path {
        &self.staging
    }

    pub fn commit(mut self) -> Result<PathBuf, DatasetError> {
        fs::rename(&self.staging, &self.target).map_err(|source| DatasetError::Io {
            path: self.target.clone(),
            source,
        })?;
        self.committed = true;
        Ok(self.target.clone())
    }
}

impl Drop for AtomicDir {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.staging);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_spec_wire_format() {
        let specs = vec![
            PromptSpec::Point { value: [3, 4] },
            PromptSpec::Box { value: [0, 1, 5, 6] },
            PromptSpec::Mask { path: "m.png".into() },
            PromptSpec::Text { value: "the red mug".into() },
            PromptSpec::Background,
            PromptSpec::Combo {
                text: "mug".into(),
                spatial: Box::new(PromptSpec::Point { value: [1, 2] }),
            },
        ];
        let json = serde_json::to_string(&specs).unwrap();
        assert_eq!(
            json,
            r#"[{"type":"point","value":[3,4]},{"type":"box","value":[0,1,5,6]},{"type":"mask","path":"m.png"},{"type":"text","value":"the red mug"},{"type":"background"},{"type":"combo","text":"mug","spatial":{"type":"point","value":[1,2]}}]"#
        );
        let back: Vec<PromptSpec> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, specs);
    }

    #[test]
    fn empty_manifest_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.json");
        fs::write(&p, r#"{"version":1,"samples":[]}"#).unwrap();
        let ds = load_manifest(&p).unwrap();
        assert!(ds.samples.is_empty());
    }

    #[test]
    fn manifest_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.json");
        assert!(matches!(load_manifest(&p), Err(DatasetError::MissingFile(_))));
        fs::write(&p, "{").unwrap();
        assert!(matches!(load_manifest(&p), Err(DatasetError::Parse { .. })));
        fs::write(&p, r#"{"version":7,"samples":[]}"#).unwrap();
        assert!(matches!(load_manifest(&p), Err(DatasetError::UnsupportedVersion(7))));
        fs::write(
            &p,
            r#"{"version":1,"samples":[{"id":"a","image_path":"x.png","layers":[]},{"id":"a","image_path":"x.png","layers":[]}]}"#,
        )
        .unwrap();
        assert!(matches!(load_manifest(&p), Err(DatasetError::InvariantViolation { .. })));
    }

    #[test]
    fn dangling_layer_path_is_named() {
        let dir = tempfile::tempdir().unwrap();
        codec::write_rgb(&dir.path().join("img.png"), &Image::filled(4, 4, [0.5; 3])).unwrap();
        let p = dir.path().join("manifest.json");
        fs::write(
            &p,
            r#"{"version":1,"samples":[{"id":"s","image_path":"img.png","layers":[
                {"id":"l","kind":"foreground","rgba_path":"nope.png","visibility_path":"v.png"}]}]}"#,
        )
        .unwrap();
        match load_manifest(&p) {
            Err(DatasetError::MissingFile(path)) => assert!(path.ends_with("nope.png")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn atomic_dir_commits_or_cleans_up() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("out");
        {
            let staged = AtomicDir::create(&target).unwrap();
            fs::write(staged.path().join("f"), "x").unwrap();
        }
        assert!(!target.exists());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
        let staged = AtomicDir::create(&target).unwrap();
        fs::write(staged.path().join("f"), "x").unwrap();
        staged.commit().unwrap();
        assert!(target.join("f").exists());
        assert!(AtomicDir::create(&target).is_err());
    }
}
