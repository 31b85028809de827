//! Little-endian binary formats. Every file starts with a 4-byte magic and
//! a `u32` version; readers reject trailing bytes and report the offset of
//! the first problem.
//!
//! | magic  | content |
//! |--------|---------|
//! | `ESFR` | one frame |
//! | `ESPL` | Gaussian field and codebook |
//! | `ESPC` | point cloud with optional labels |
//! | `ESTX` | class vectors |

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use semsplat_core::{CameraIntrinsics, Codebook, Frame, GaussianField, Pose, ShapeBlock};

use crate::error::{Error, Result};

pub const VERSION: u32 = 1;
pub const FRAME_MAGIC: &[u8; 4] = b"ESFR";
pub const FIELD_MAGIC: &[u8; 4] = b"ESPL";
pub const POINTS_MAGIC: &[u8; 4] = b"ESPC";
pub const CLASSES_MAGIC: &[u8; 4] = b"ESTX";

/// Size of an `ESPL` file holding no Gaussians and an empty codebook:
/// magic, version, M, L, D_f, K, D and the shape tag.
pub const EMPTY_FIELD_BYTES: usize = 4 + 4 + 8 + 4 + 4 + 8 + 4 + 1;

/// Offset-tracking reader over an in-memory file.
struct Reader<'a> {
    what: &'static str,
    cur: Cursor<&'a [u8]>,
}

impl<'a> Reader<'a> {
    fn new(what: &'static str, bytes: &'a [u8]) -> Self {
        Self { what, cur: Cursor::new(bytes) }
    }

    fn fail<T>(&self, offset: u64, reason: impl Into<String>) -> Result<T> {
        Err(Error::Format { what: self.what, offset, reason: reason.into() })
    }

    fn remaining(&self) -> u64 {
        self.cur.get_ref().len() as u64 - self.cur.position()
    }

    fn need(&self, bytes: u64, item: &str) -> Result<()> {
        if self.remaining() < bytes {
            return self.fail(self.cur.position(), format!("truncated {item}: need {bytes} bytes, {} left", self.remaining()));
        }
        Ok(())
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        self.need(8, "header")?;
        let mut got = [0u8; 4];
        self.cur.read_exact(&mut got).expect("length checked");
        if &got != magic {
            return self.fail(0, format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(&got), String::from_utf8_lossy(magic)));
        }
        let version = self.u32("version")?;
        if version != VERSION {
            return self.fail(4, format!("unsupported version {version}"));
        }
        Ok(())
    }

    fn u8(&mut self, item: &str) -> Result<u8> {
        self.need(1, item)?;
        Ok(self.cur.read_u8().expect("length checked"))
    }

    fn u32(&mut self, item: &str) -> Result<u32> {
        self.need(4, item)?;
        Ok(self.cur.read_u32::<LE>().expect("length checked"))
    }

    fn u64(&mut self, item: &str) -> Result<u64> {
        self.need(8, item)?;
        Ok(self.cur.read_u64::<LE>().expect("length checked"))
    }

    /// Element count `a·b·…` that must fit in the remaining bytes at
    /// `width` bytes per element.
    fn count(&self, dims: &[u64], width: u64, item: &str) -> Result<usize> {
        let n = dims.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d));
        match n.and_then(|n| n.checked_mul(width)) {
            Some(bytes) if bytes <= self.remaining() => Ok(n.unwrap_or_default() as usize),
            _ => self.fail(self.cur.position(), format!("truncated {item}: {dims:?} elements exceed the {} bytes left", self.remaining())),
        }
    }

    fn f32s(&mut self, n: usize, item: &str) -> Result<Vec<f32>> {
        self.need(4 * n as u64, item)?;
        let mut out = vec![0.0f32; n];
        self.cur.read_f32_into::<LE>(&mut out).expect("length checked");
        Ok(out)
    }

    fn u32s(&mut self, n: usize, item: &str) -> Result<Vec<u32>> {
        self.need(4 * n as u64, item)?;
        let mut out = vec![0u32; n];
        self.cur.read_u32_into::<LE>(&mut out).expect("length checked");
        Ok(out)
    }

    fn flag(&mut self, item: &str) -> Result<bool> {
        let at = self.cur.position();
        match self.u8(item)? {
            0 => Ok(false),
            1 => Ok(true),
            v => self.fail(at, format!("{item} flag is {v}, expected 0 or 1")),
        }
    }

    fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return self.fail(self.cur.position(), format!("{} trailing bytes", self.remaining()));
        }
        Ok(())
    }
}

fn header(out: &mut Vec<u8>, magic: &[u8; 4]) {
    out.extend_from_slice(magic);
    out.write_u32::<LE>(VERSION).unwrap();
}

fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    out.reserve(4 * values.len());
    for &v in values {
        out.write_f32::<LE>(v).unwrap();
    }
}

fn put_u32s(out: &mut Vec<u8>, values: &[u32]) {
    out.reserve(4 * values.len());
    for &v in values {
        out.write_u32::<LE>(v).unwrap();
    }
}

fn to_u32(v: usize, item: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Usage(format!("{item} {v} does not fit in u32")))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(Error::io(path))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(Error::io(path))
}

// Intrinsics carry two reserved floats after fx, fy, cx, cy; written as 0.
pub fn encode_frame(frame: &Frame) -> Result<Vec<u8>> {
    frame.validate()?;
    let mut out = Vec::new();
    header(&mut out, FRAME_MAGIC);
    out.write_u64::<LE>(frame.step).unwrap();
    let k = &frame.intrinsics;
    put_f32s(&mut out, &[k.fx as f32, k.fy as f32, k.cx as f32, k.cy as f32, 0.0, 0.0]);
    put_u32s(&mut out, &[k.width, k.height]);
    let r = &frame.pose.rotation;
    let t = &frame.pose.translation;
    let pose: Vec<f32> = r.iter().flatten().chain(t.iter()).map(|&v| v as f32).collect();
    put_f32s(&mut out, &pose);
    let latent_dim = if frame.latents.is_some() { frame.latent_dim } else { 0 };
    put_u32s(
        &mut out,
        &[
            k.height,
            k.width,
            to_u32(frame.feature_dim, "feature dim")?,
            to_u32(latent_dim, "latent dim")?,
            to_u32(frame.instance_count(), "instance count")?,
        ],
    );
    put_f32s(&mut out, &frame.depth);
    match &frame.sensor_depth {
        Some(s) => {
            out.push(1);
            put_f32s(&mut out, s);
        }
        None => out.push(0),
    }
    put_f32s(&mut out, &frame.confidence);
    put_u32s(&mut out, &frame.instance_ids);
    put_f32s(&mut out, &frame.instance_features);
    match &frame.latents {
        Some(l) => {
            out.push(1);
            put_f32s(&mut out, l);
        }
        None => out.push(0),
    }
    Ok(out)
}

pub fn decode_frame(bytes: &[u8]) -> Result<Frame> {
    let mut r = Reader::new("frame", bytes);
    r.header(FRAME_MAGIC)?;
    let step = r.u64("step")?;
    let k = r.f32s(6, "intrinsics")?;
    let dims_at = r.cur.position();
    let (width, height) = (r.u32("width")?, r.u32("height")?);
    let intrinsics = CameraIntrinsics { fx: k[0] as f64, fy: k[1] as f64, cx: k[2] as f64, cy: k[3] as f64, width, height };
    let p: Vec<f64> = r.f32s(12, "pose")?.into_iter().map(f64::from).collect();
    let pose = Pose { rotation: [[p[0], p[1], p[2]], [p[3], p[4], p[5]], [p[6], p[7], p[8]]], translation: [p[9], p[10], p[11]] };
    let h = r.u32("height")?;
    let w = r.u32("width")?;
    if (h, w) != (height, width) {
        return r.fail(dims_at, format!("map size {h}x{w} disagrees with intrinsics {height}x{width}"));
    }
    let feature_dim = r.u32("feature dim")? as usize;
    let latent_dim = r.u32("latent dim")? as usize;
    let instances = r.u32("instance count")? as u64;
    let pixels = r.count(&[h as u64, w as u64], 4, "depth")?;
    let depth = r.f32s(pixels, "depth")?;
    let sensor_depth = if r.flag("sensor depth")? { Some(r.f32s(pixels, "sensor depth")?) } else { None };
    let confidence = r.f32s(pixels, "confidence")?;
    let instance_ids = r.u32s(pixels, "instance ids")?;
    let nf = r.count(&[instances, feature_dim as u64], 4, "instance features")?;
    let instance_features = r.f32s(nf, "instance features")?;
    let latents_at = r.cur.position();
    let latents = if r.flag("latents")? {
        let n = r.count(&[pixels as u64, latent_dim as u64], 4, "latents")?;
        Some(r.f32s(n, "latents")?)
    } else {
        if latent_dim != 0 {
            return r.fail(latents_at, format!("latent dim {latent_dim} declared without latents"));
        }
        None
    };
    r.finish()?;
    let frame = Frame {
        step,
        intrinsics,
        pose,
        depth,
        sensor_depth,
        confidence,
        instance_ids,
        feature_dim,
        instance_features,
        latent_dim,
        latents,
    };
    frame.validate()?;
    Ok(frame)
}

pub fn write_frame(path: &Path, frame: &Frame) -> Result<()> {
    write_file(path, &encode_frame(frame)?)
}

pub fn read_frame(path: &Path) -> Result<Frame> {
    decode_frame(&read_file(path)?)
}

pub fn encode_field(field: &GaussianField, codebook: &Codebook) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(EMPTY_FIELD_BYTES + 4 * (field.centers().len() + codebook.as_slice().len()));
    header(&mut out, FIELD_MAGIC);
    out.write_u64::<LE>(field.len() as u64).unwrap();
    out.write_u32::<LE>(to_u32(field.cache_len(), "cache length")?).unwrap();
    out.write_u32::<LE>(to_u32(field.latent_dim(), "latent dim")?).unwrap();
    out.write_u64::<LE>(codebook.len() as u64).unwrap();
    out.write_u32::<LE>(to_u32(codebook.dim(), "codebook dim")?).unwrap();
    put_f32s(&mut out, field.centers());
    put_f32s(&mut out, field.confidences());
    put_f32s(&mut out, field.latents());
    put_u32s(&mut out, field.index_cache());
    put_f32s(&mut out, field.weight_cache());
    let shape = field.shape();
    out.push(shape.tag());
    match shape {
        ShapeBlock::None => {}
        ShapeBlock::Isotropic(s) => put_f32s(&mut out, s),
        ShapeBlock::Anisotropic { scales, rotations } => {
            put_f32s(&mut out, scales);
            put_f32s(&mut out, rotations);
        }
    }
    put_f32s(&mut out, codebook.as_slice());
    Ok(out)
}

/// Decodes an `ESPL` dump. Structure is checked here; value-level problems
/// such as unsorted caches are reported by `validate_field`.
pub fn decode_field(bytes: &[u8]) -> Result<(GaussianField, Codebook)> {
    let mut r = Reader::new("field", bytes);
    r.header(FIELD_MAGIC)?;
    let m = r.u64("gaussian count")?;
    let l_at = r.cur.position();
    let cache_len = r.u32("cache length")? as u64;
    if cache_len < 2 {
        return r.fail(l_at, format!("cache length {cache_len} is below 2"));
    }
    let latent_dim = r.u32("latent dim")? as u64;
    let k = r.u64("codebook length")?;
    let dim_at = r.cur.position();
    let dim = r.u32("codebook dim")? as u64;
    if dim == 0 && k > 0 {
        return r.fail(dim_at, "non-empty codebook with dimension 0");
    }
    let n = r.count(&[m, 3], 4, "centers")?;
    let centers = r.f32s(n, "centers")?;
    let n = r.count(&[m], 4, "confidences")?;
    let confidences = r.f32s(n, "confidences")?;
    let n = r.count(&[m, latent_dim], 4, "latents")?;
    let latents = r.f32s(n, "latents")?;
    let n = r.count(&[m, cache_len - 1], 4, "index cache")?;
    let index_cache = r.u32s(n, "index cache")?;
    let weight_cache = r.f32s(n, "weight cache")?;
    let tag_at = r.cur.position();
    let shape = match r.u8("shape tag")? {
        0 => ShapeBlock::None,
        1 => {
            let n = r.count(&[m], 4, "isotropic scales")?;
            ShapeBlock::Isotropic(r.f32s(n, "isotropic scales")?)
        }
        2 => {
            let n = r.count(&[m, 3], 4, "scales")?;
            let scales = r.f32s(n, "scales")?;
            let n = r.count(&[m, 4], 4, "rotations")?;
            ShapeBlock::Anisotropic { scales, rotations: r.f32s(n, "rotations")? }
        }
        t => return r.fail(tag_at, format!("unknown shape tag {t}")),
    };
    let n = r.count(&[k, dim], 4, "codebook")?;
    let vectors = r.f32s(n, "codebook")?;
    r.finish()?;
    let field = GaussianField::from_parts(
        cache_len as usize,
        latent_dim as usize,
        centers,
        confidences,
        latents,
        index_cache,
        weight_cache,
        shape,
    )?;
    let codebook = Codebook::from_parts(dim as usize, vectors)?;
    Ok((field, codebook))
}

pub fn save_field(path: &Path, field: &GaussianField, codebook: &Codebook) -> Result<()> {
    write_file(path, &encode_field(field, codebook)?)
}

pub fn load_field(path: &Path) -> Result<(GaussianField, Codebook)> {
    decode_field(&read_file(path)?)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f32; 3]>,
    pub labels: Option<Vec<u32>>,
}

pub fn encode_points(cloud: &PointCloud) -> Result<Vec<u8>> {
    if let Some(labels) = &cloud.labels {
        if labels.len() != cloud.points.len() {
            return Err(Error::Usage(format!("{} labels for {} points", labels.len(), cloud.points.len())));
        }
    }
    let mut out = Vec::with_capacity(12 + 16 * cloud.points.len());
    header(&mut out, POINTS_MAGIC);
    out.write_u32::<LE>(to_u32(cloud.points.len(), "point count")?).unwrap();
    put_f32s(&mut out, cloud.points.as_flattened());
    if let Some(labels) = &cloud.labels {
        put_u32s(&mut out, labels);
    }
    Ok(out)
}

/// The label appendix is present iff exactly `N × 4` bytes follow the points.
pub fn decode_points(bytes: &[u8]) -> Result<PointCloud> {
    let mut r = Reader::new("point cloud", bytes);
    r.header(POINTS_MAGIC)?;
    let n = r.u32("point count")? as u64;
    let count = r.count(&[n, 3], 4, "points")?;
    let flat = r.f32s(count, "points")?;
    let points = flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    let labels = match r.remaining() {
        0 => None,
        rest if rest == 4 * n => Some(r.u32s(n as usize, "labels")?),
        rest => return r.fail(r.cur.position(), format!("{rest} trailing bytes; a label appendix needs {}", 4 * n)),
    };
    r.finish()?;
    Ok(PointCloud { points, labels })
}

pub fn write_points(path: &Path, cloud: &PointCloud) -> Result<()> {
    write_file(path, &encode_points(cloud)?)
}

pub fn read_points(path: &Path) -> Result<PointCloud> {
    decode_points(&read_file(path)?)
}

/// `classes × dim` row-major class vectors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassVectors {
    pub dim: usize,
    pub vectors: Vec<f32>,
}

impl ClassVectors {
    pub fn len(&self) -> usize {
        self.vectors.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn encode_classes(classes: &ClassVectors) -> Result<Vec<u8>> {
    if classes.dim == 0 || !classes.vectors.len().is_multiple_of(classes.dim) {
        return Err(Error::Usage(format!("{} values do not form rows of {}", classes.vectors.len(), classes.dim)));
    }
    let mut out = Vec::with_capacity(16 + 4 * classes.vectors.len());
    header(&mut out, CLASSES_MAGIC);
    out.write_u32::<LE>(to_u32(classes.len(), "class count")?).unwrap();
    out.write_u32::<LE>(to_u32(classes.dim, "class dim")?).unwrap();
    put_f32s(&mut out, &classes.vectors);
    Ok(out)
}

pub fn decode_classes(bytes: &[u8]) -> Result<ClassVectors> {
    let mut r = Reader::new("class vectors", bytes);
    r.header(CLASSES_MAGIC)?;
    let c = r.u32("class count")? as u64;
    let dim_at = r.cur.position();
    let d = r.u32("class dim")? as u64;
    if d == 0 {
        return r.fail(dim_at, "class dimension 0");
    }
    let n = r.count(&[c, d], 4, "class vectors")?;
    let vectors = r.f32s(n, "class vectors")?;
    r.finish()?;
    Ok(ClassVectors { dim: d as usize, vectors })
}

pub fn write_classes(path: &Path, classes: &ClassVectors) -> Result<()> {
    write_file(path, &encode_classes(classes)?)
}

pub fn read_classes(path: &Path) -> Result<ClassVectors> {
    decode_classes(&read_file(path)?)
}

/// Raw `N × u32` label list.
pub fn write_labels(path: &Path, labels: &[u32]) -> Result<()> {
    let mut out = Vec::with_capacity(4 * labels.len());
    put_u32s(&mut out, labels);
    write_file(path, &out)
}

pub fn read_labels(path: &Path) -> Result<Vec<u32>> {
    let bytes = read_file(path)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Format { what: "labels", offset: (bytes.len() - bytes.len() % 4) as u64, reason: "partial label".into() });
    }
    Ok(bytes.chunks_exact(4).map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json { path: path.into(), source })?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes).map_err(|source| Error::Json { path: path.into(), source })
}
