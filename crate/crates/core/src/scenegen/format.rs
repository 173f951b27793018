//! On-disk dataset layout.
//!
//! A dataset directory holds `manifest.jsonl` (one JSON record per sample),
//! `generator.json` (the seed and distribution that produced it) and one
//! binary `sample_NNNNNN.smt` file per sample:
//!
//! ```text
//! "SMT1"  u32 field_count
//! per field: u32 name_len, name (UTF-8), u32 rank, rank x u32 dims, f32 payload
//! ```
//!
//! All integers and floats are little-endian. Fields, in order: `image`
//! `[H,W,3]`, `depth_m` `[H,W]`, `mask` `[H,W]` (class ids as floats),
//! `time_min` `[1]`, `weather` `[1]`, `world_pos` `[2]`, `objects` `[N,2]`
//! (class id, distance in meters).

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{generate_sample, LabelDistribution, PlacedObject, Sample};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const GENERATOR_FILE: &str = "generator.json";
const SAMPLE_MAGIC: &[u8; 4] = b"SMT1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: usize,
    pub file: String,
    pub world_pos: [f64; 2],
    pub time_min: f64,
    pub weather: u8,
    pub n_cars: usize,
    pub n_pedestrians: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("manifest entry serialises"));
            out.push('\n');
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct GeneratorRecord {
    n: usize,
    seed: u64,
    dist: LabelDistribution,
}

/// Hex SHA-256 of a dataset's manifest file.
pub fn manifest_hash(dir: &Path) -> Result<String> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut entries = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry =
            serde_json::from_str(&line).map_err(|e| Error::format(&path, format!("line {}: {e}", n + 1)))?;
        entries.push(entry);
    }
    Ok(Manifest { entries })
}

fn sample_file_name(index: usize) -> String {
    format!("sample_{index:06}.smt")
}

/// Renders `n` samples into `out_dir` and writes the manifest.
pub fn generate_dataset(n: usize, seed: u64, dist: &LabelDistribution, out_dir: &Path) -> Result<Manifest> {
    if n == 0 {
        return Err(Error::InvalidArgument("dataset size must be at least 1".into()));
    }
    dist.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut manifest = Manifest::default();
    for i in 0..n {
        let sample = generate_sample(seed, i as u64, dist)?;
        let file = sample_file_name(i);
        write_sample(&out_dir.join(&file), &sample)?;
        let count = |class| sample.objects.iter().filter(|o| o.class == class).count();
        manifest.entries.push(ManifestEntry {
            id: i,
            file,
            world_pos: sample.world_pos,
            time_min: sample.time_min,
            weather: sample.weather,
            n_cars: count(super::CLASS_CAR),
            n_pedestrians: count(super::CLASS_PEDESTRIAN),
        });
    }
    let path = out_dir.join(MANIFEST_FILE);
    fs::write(&path, manifest.to_jsonl()).map_err(|e| Error::io(&path, e))?;
    let path = out_dir.join(GENERATOR_FILE);
    let record = GeneratorRecord { n, seed, dist: dist.clone() };
    let json = serde_json::to_string_pretty(&record).expect("generator record serialises");
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

fn put_field(out: &mut impl Write, name: &str, dims: &[usize], data: impl Iterator<Item = f32>) -> std::io::Result<()> {
    out.write_all(&(name.len() as u32).to_le_bytes())?;
    out.write_all(name.as_bytes())?;
    out.write_all(&(dims.len() as u32).to_le_bytes())?;
    for &d in dims {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    for v in data {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_sample(path: &Path, s: &Sample) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let (h, w) = (s.height, s.width);
    let write = |out: &mut BufWriter<fs::File>| -> std::io::Result<()> {
        out.write_all(SAMPLE_MAGIC)?;
        out.write_all(&7u32.to_le_bytes())?;
        put_field(out, "image", &[h, w, 3], s.image.iter().copied())?;
        put_field(out, "depth_m", &[h, w], s.depth_m.iter().copied())?;
        put_field(out, "mask", &[h, w], s.mask.iter().map(|&m| m as f32))?;
        put_field(out, "time_min", &[1], std::iter::once(s.time_min as f32))?;
        put_field(out, "weather", &[1], std::iter::once(s.weather as f32))?;
        put_field(out, "world_pos", &[2], s.world_pos.iter().map(|&v| v as f32))?;
        put_field(
            out,
            "objects",
            &[s.objects.len(), 2],
            s.objects.iter().flat_map(|o| [o.class as f32, o.distance_m as f32]),
        )?;
        out.flush()
    };
    write(&mut out).map_err(|e| Error::io(path, e))
}

struct Field {
    name: String,
    dims: Vec<usize>,
    data: Vec<f32>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<usize> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?) as usize)
    }
}

fn parse_fields(bytes: &[u8]) -> Option<Vec<Field>> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != SAMPLE_MAGIC {
        return None;
    }
    let count = cur.u32()?;
    let mut fields = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let len = cur.u32()?;
        let name = String::from_utf8(cur.take(len)?.to_vec()).ok()?;
        let rank = cur.u32()?;
        let dims = (0..rank).map(|_| cur.u32()).collect::<Option<Vec<_>>>()?;
        let numel = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))?;
        let payload = cur.take(numel.checked_mul(4)?)?;
        let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        fields.push(Field { name, dims, data });
    }
    (cur.pos == bytes.len()).then_some(fields)
}

pub fn read_sample(path: &Path) -> Result<Sample> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let fields = parse_fields(&bytes).ok_or_else(|| Error::format(path, "truncated or bad magic"))?;
    let get = |name: &str| {
        fields.iter().find(|f| f.name == name).ok_or_else(|| Error::format(path, format!("missing field {name}")))
    };
    let image = get("image")?;
    let [h, w, 3] = image.dims[..] else {
        return Err(Error::format(path, format!("image dims {:?}", image.dims)));
    };
    let depth = get("depth_m")?;
    let mask = get("mask")?;
    if depth.dims != [h, w] || mask.dims != [h, w] {
        return Err(Error::format(path, "label maps do not match image size"));
    }
    let scalar = |name: &str| -> Result<f32> {
        get(name)?.data.first().copied().ok_or_else(|| Error::format(path, format!("empty field {name}")))
    };
    let pos = get("world_pos")?;
    if pos.data.len() != 2 {
        return Err(Error::format(path, "world_pos needs two values"));
    }
    let objects = get("objects")?;
    if objects.dims.len() != 2 || objects.dims[1] != 2 {
        return Err(Error::format(path, "objects must be [N,2]"));
    }
    Ok(Sample {
        height: h,
        width: w,
        image: image.data.clone(),
        depth_m: depth.data.clone(),
        mask: mask.data.iter().map(|&m| m as u8).collect(),
        time_min: scalar("time_min")? as f64,
        weather: scalar("weather")? as u8,
        world_pos: [pos.data[0] as f64, pos.data[1] as f64],
        objects: objects
            .data
            .chunks_exact(2)
            .map(|o| PlacedObject { class: o[0] as u8, distance_m: o[1] as f64 })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let dist = LabelDistribution::default();
        for i in 0..5 {
            let s = generate_sample(2, i, &dist).unwrap();
            let path = dir.path().join("s.smt");
            write_sample(&path, &s).unwrap();
            assert_eq!(read_sample(&path).unwrap(), s);
        }
    }

    #[test]
    fn header_layout_is_fixed() {
        let dir = tempfile::tempdir().unwrap();
        let s = generate_sample(2, 0, &LabelDistribution::default()).unwrap();
        let path = dir.path().join("s.smt");
        write_sample(&path, &s).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"SMT1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 7);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 5);
        assert_eq!(&bytes[12..17], b"image");
        assert_eq!(u32::from_le_bytes(bytes[17..21].try_into().unwrap()), 3);
        let dims: Vec<u32> =
            (0..3).map(|k| u32::from_le_bytes(bytes[21 + 4 * k..25 + 4 * k].try_into().unwrap())).collect();
        assert_eq!(dims, vec![48, 64, 3]);
        let first = f32::from_le_bytes(bytes[33..37].try_into().unwrap());
        assert_eq!(first, s.image[0]);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let s = generate_sample(2, 0, &LabelDistribution::default()).unwrap();
        let path = dir.path().join("s.smt");
        write_sample(&path, &s).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(read_sample(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn dataset_manifest_and_hash() {
        let dir = tempfile::tempdir().unwrap();
        let dist = LabelDistribution::default();
        let m = generate_dataset(10, 4, &dist, dir.path()).unwrap();
        assert_eq!(m.len(), 10);
        for e in &m.entries {
            assert!(dir.path().join(&e.file).exists());
        }
        assert_eq!(load_manifest(dir.path()).unwrap(), m);
        let h1 = manifest_hash(dir.path()).unwrap();
        let other = tempfile::tempdir().unwrap();
        generate_dataset(10, 4, &dist, other.path()).unwrap();
        assert_eq!(manifest_hash(other.path()).unwrap(), h1);
        assert_eq!(h1.len(), 64);
    }

    #[test]
    fn zero_samples_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(generate_dataset(0, 1, &LabelDistribution::default(), dir.path()).is_err());
    }
}
