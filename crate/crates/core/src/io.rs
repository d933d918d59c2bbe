//! File formats: field snapshots, coefficient dumps, CSV output, key=value
//! configuration and geometry files, run manifests.

use crate::error::{Error, Result};
use crate::field::{BoundingBox, Grid, Mask, Point, SampledField};
use crate::geometry::DomainGeometry;
use crate::wavelet::{CoeffTree, WaveletIndex};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"PSNP";
pub const TREE_MAGIC: &[u8; 4] = b"CTRE";
/// Finest grid level accepted from files.
pub const MAX_FILE_LEVEL: u32 = 13;

/// Fixed-width float formatting (17 significant digits).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn expect_magic<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<()> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    if &b != magic {
        return Err(Error::Parse(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&b),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

/// A field at one time: `PSNP`, `u32` level, `f64` time, then `4^level`
/// row-major `f64` values, all little-endian.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub level: u32,
    pub t: f64,
    pub values: Vec<f64>,
}

impl Snapshot {
    pub fn from_field(field: &SampledField, t: f64) -> Self {
        Self {
            level: field.grid.level,
            t,
            values: field.values.clone(),
        }
    }

    /// Field on `bbox` with every cell marked inside.
    pub fn to_field(&self, bbox: BoundingBox) -> Result<SampledField> {
        let grid = Grid::new(bbox, self.level)?;
        SampledField::from_values(&Mask::full(grid), self.values.clone())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&self.level.to_le_bytes())?;
        w.write_all(&self.t.to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        expect_magic(&mut r, SNAPSHOT_MAGIC)?;
        let level = read_u32(&mut r)?;
        if level > MAX_FILE_LEVEL {
            return Err(Error::Parse(format!("snapshot level {level} exceeds {MAX_FILE_LEVEL}")));
        }
        let t = read_f64(&mut r)?;
        let n = 1usize << (2 * level);
        let values = (0..n).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        Ok(Self { level, t, values })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

/// Coefficient dump as CSV: `level,j_k1,j_k2,type,coeff`.
pub fn write_tree_csv<W: Write>(tree: &CoeffTree, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["level", "j_k1", "j_k2", "type", "coeff"])?;
    for (idx, c) in tree.entries() {
        out.write_record([
            idx.level.to_string(),
            idx.k[0].to_string(),
            idx.k[1].to_string(),
            idx.ty.to_string(),
            fmt_f64(c),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Binary coefficient dump: `CTRE`, `u32` dimension, `u32` finest level,
/// then one record per stored entry (`u32` level, `u32` k1, `u32` k2,
/// `u32` type, `f64` coefficient), little-endian. Type 0 marks fathers.
pub fn write_tree_bin<W: Write>(tree: &CoeffTree, mut w: W) -> Result<()> {
    w.write_all(TREE_MAGIC)?;
    w.write_all(&(tree.dim as u32).to_le_bytes())?;
    w.write_all(&tree.finest.to_le_bytes())?;
    for (idx, c) in tree.entries() {
        for v in [idx.level, idx.k[0], idx.k[1], idx.ty as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&c.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a binary dump; `order` and `bbox` are not stored in the file.
pub fn read_tree_bin<R: Read>(mut r: R, order: usize, bbox: BoundingBox) -> Result<CoeffTree> {
    expect_magic(&mut r, TREE_MAGIC)?;
    let dim = read_u32(&mut r)? as usize;
    let finest = read_u32(&mut r)?;
    if finest > MAX_FILE_LEVEL {
        return Err(Error::Parse(format!("tree level {finest} exceeds {MAX_FILE_LEVEL}")));
    }
    let mut records = Vec::new();
    loop {
        let mut first = [0u8; 4];
        match r.read(&mut first)? {
            0 => break,
            4 => {}
            k => r.read_exact(&mut first[k..])?,
        }
        let level = u32::from_le_bytes(first);
        let k1 = read_u32(&mut r)?;
        let k2 = read_u32(&mut r)?;
        let ty = read_u32(&mut r)?;
        let c = read_f64(&mut r)?;
        if ty > 3 {
            return Err(Error::Parse(format!("wavelet type {ty} out of range")));
        }
        records.push((WaveletIndex::new(level, k1, k2, ty as u8), c));
    }
    let coarsest = records
        .iter()
        .filter(|(i, _)| i.is_father())
        .map(|(i, _)| i.level)
        .min()
        .ok_or_else(|| Error::Parse("tree dump has no father records".into()))?;
    let n = 1usize << finest;
    let mut tree = CoeffTree::empty(order, dim, bbox, n, coarsest)?;
    for (idx, c) in records {
        tree.set(&idx, c)?;
    }
    Ok(tree)
}

/// CSV writer with RFC-4180 quoting.
pub fn csv_file(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::Writer::from_path(path)?)
}

/// `key = value` lines; `#` starts a comment, blank lines are skipped.
/// Keys are case-sensitive.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected key=value, got `{raw}`", no + 1)))?;
        let key = k.trim().to_string();
        if key.is_empty() {
            return Err(Error::Parse(format!("line {}: empty key", no + 1)));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

pub fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("`{s}` is not a number")))
}

/// Angle in radians from `270deg`, `270°`, `1.5pi`, `pi/4` or plain radians.
pub fn parse_angle(s: &str) -> Result<f64> {
    let t = s.trim().to_ascii_lowercase();
    if let Some(d) = t.strip_suffix("deg").or_else(|| t.strip_suffix('°')) {
        return Ok(parse_f64(d)? * PI / 180.0);
    }
    if let Some((num, den)) = t.split_once('/') {
        let num = num.trim();
        let top = if num == "pi" {
            PI
        } else if let Some(c) = num.strip_suffix("pi") {
            parse_f64(c)? * PI
        } else {
            parse_f64(num)?
        };
        return Ok(top / parse_f64(den)?);
    }
    if t == "pi" {
        return Ok(PI);
    }
    if let Some(c) = t.strip_suffix("pi") {
        return Ok(parse_f64(c)? * PI);
    }
    parse_f64(&t)
}

pub fn parse_point(s: &str) -> Result<Point> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::Parse(format!("`{s}` is not a point x,y")));
    }
    Ok([parse_f64(parts[0])?, parse_f64(parts[1])?])
}

/// Semicolon-separated points `x,y; x,y; ...`.
pub fn parse_points(s: &str) -> Result<Vec<Point>> {
    s.split(';')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(parse_point)
        .collect()
}

fn parse_box(s: &str) -> Result<BoundingBox> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::Parse(format!("box `{s}` must be xmin,ymin,side")));
    }
    let side = parse_f64(parts[2])?;
    if !(side > 0.0) {
        return Err(Error::Parse(format!("box side {side} must be positive")));
    }
    Ok(BoundingBox::new([parse_f64(parts[0])?, parse_f64(parts[1])?], side))
}

/// Geometry from `key=value` pairs.
///
/// Keys: `kind` (`wedge`, `polygon`, `lshape`, `square`, `cap`), `theta`
/// (wedge opening or cap half-angle), `vertex`, `start`, `vertices`,
/// `singular` (`all` or points), `box` (`xmin,ymin,side`), `r0`, `eps`.
pub fn geometry_from_kv(kv: &BTreeMap<String, String>) -> Result<DomainGeometry> {
    let kv: BTreeMap<String, String> = kv.iter().map(|(k, v)| (k.to_ascii_lowercase(), v.clone())).collect();
    const KNOWN: [&str; 9] = ["kind", "theta", "vertex", "start", "vertices", "singular", "box", "r0", "eps"];
    if let Some(k) = kv.keys().find(|k| !KNOWN.contains(&k.as_str())) {
        return Err(Error::Parse(format!("unknown geometry key `{k}`")));
    }
    let kind = kv
        .get("kind")
        .ok_or_else(|| Error::Parse("geometry needs `kind`".into()))?
        .to_ascii_lowercase();
    let bbox = kv.get("box").map(|s| parse_box(s)).transpose()?;
    let theta = kv.get("theta").map(|s| parse_angle(s)).transpose()?;
    let mut geom = match kind.as_str() {
        "wedge" => {
            let theta = theta.ok_or_else(|| Error::Parse("wedge needs `theta`".into()))?;
            let vertex = kv.get("vertex").map(|s| parse_point(s)).transpose()?.unwrap_or([0.0, 0.0]);
            let start = kv.get("start").map(|s| parse_angle(s)).transpose()?.unwrap_or(0.0);
            let bbox = bbox.unwrap_or_else(|| BoundingBox::new([vertex[0] - 0.5, vertex[1] - 0.5], 1.0));
            DomainGeometry::wedge_at(vertex, start, theta, bbox)?
        }
        "polygon" => {
            let vertices = parse_points(
                kv.get("vertices")
                    .ok_or_else(|| Error::Parse("polygon needs `vertices`".into()))?,
            )?;
            let singular = match kv.get("singular").map(|s| s.trim().to_ascii_lowercase()) {
                None => None,
                Some(s) if s == "all" => None,
                Some(s) => Some(parse_points(&s)?),
            };
            let bbox = match bbox {
                Some(b) => b,
                None => {
                    let xs = vertices.iter().map(|v| v[0]);
                    let ys = vertices.iter().map(|v| v[1]);
                    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |a, x| (a.0.min(x), a.1.max(x)));
                    let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |a, y| (a.0.min(y), a.1.max(y)));
                    BoundingBox::new([x0, y0], (x1 - x0).max(y1 - y0))
                }
            };
            DomainGeometry::polygon(vertices, singular, bbox)?
        }
        "lshape" => DomainGeometry::l_shape_unit(),
        "square" => DomainGeometry::unit_square(),
        "cap" => DomainGeometry::cap_cone(theta.ok_or_else(|| Error::Parse("cap needs `theta`".into()))?)?,
        other => return Err(Error::Parse(format!("unknown geometry kind `{other}`"))),
    };
    if let Some(b) = bbox {
        geom = geom.with_bbox(b);
    }
    let r0 = kv.get("r0").map(|s| parse_f64(s)).transpose()?;
    let eps = kv.get("eps").map(|s| parse_f64(s)).transpose()?;
    if r0.is_some() || eps.is_some() {
        let (r0, eps) = (r0.unwrap_or(geom.r0), eps.unwrap_or(geom.eps));
        geom = geom.with_cutoff(r0, eps)?;
    }
    Ok(geom)
}

pub fn parse_geometry(text: &str) -> Result<DomainGeometry> {
    geometry_from_kv(&parse_kv(text)?)
}

pub fn load_geometry(path: &Path) -> Result<DomainGeometry> {
    parse_geometry(&std::fs::read_to_string(path)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// Record of a CLI run, written before any output.
#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub subcommand: String,
    pub params: BTreeMap<String, String>,
    pub input_hashes: BTreeMap<String, String>,
    pub version: String,
    pub timestamp: u64,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub const FILE_NAME: &'static str = "manifest.txt";

    pub fn new(subcommand: &str) -> Self {
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            subcommand: subcommand.to_string(),
            params: BTreeMap::new(),
            input_hashes: BTreeMap::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp,
            outputs: Vec::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }

    pub fn input(&mut self, path: &Path) -> Result<&mut Self> {
        let h = sha256_file(path)?;
        self.input_hashes.insert(path.display().to_string(), h);
        Ok(self)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("subcommand = {}\n", self.subcommand));
        s.push_str(&format!("version = {}\n", self.version));
        s.push_str(&format!("timestamp = {}\n", self.timestamp));
        for (k, v) in &self.params {
            s.push_str(&format!("param.{k} = {v}\n"));
        }
        for (k, v) in &self.input_hashes {
            s.push_str(&format!("input.{k} = sha256:{v}\n"));
        }
        for o in &self.outputs {
            s.push_str(&format!("output = {}\n", o.display()));
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(Self::FILE_NAME);
        std::fs::write(&path, self.to_text())?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::{dwt_forward, WaveletSystem};

    #[test]
    fn snapshot_round_trip() {
        let grid = Grid::new(BoundingBox::unit(), 3).unwrap();
        let f = SampledField::from_fn(&Mask::full(grid), |x| x[0] - 2.0 * x[1]);
        let s = Snapshot::from_field(&f, 0.25);
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"PSNP");
        assert_eq!(buf.len(), 4 + 4 + 8 + 64 * 8);
        let back = Snapshot::read_from(&buf[..]).unwrap();
        assert_eq!(back, s);
        assert!(Snapshot::read_from(&b"XXXX"[..]).is_err());
    }

    #[test]
    fn tree_round_trip() {
        let grid = Grid::new(BoundingBox::unit(), 4).unwrap();
        let f = SampledField::from_fn(&Mask::full(grid), |x| (x[0] * 7.0).sin() * x[1]);
        let tree = dwt_forward(&f, &WaveletSystem::new(3).unwrap(), 3).unwrap();
        let mut buf = Vec::new();
        write_tree_bin(&tree, &mut buf).unwrap();
        let back = read_tree_bin(&buf[..], 3, BoundingBox::unit()).unwrap();
        assert_eq!(back.entries(), tree.entries());
        let mut csv = Vec::new();
        write_tree_csv(&tree, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("level,j_k1,j_k2,type,coeff\n"));
        assert_eq!(text.lines().count(), 1 + 256);
    }

    #[test]
    fn angles() {
        for (s, v) in [("270deg", 1.5 * PI), ("1.5pi", 1.5 * PI), ("pi/4", PI / 4.0), ("3pi/2", 1.5 * PI), ("0.5", 0.5)] {
            assert!((parse_angle(s).unwrap() - v).abs() < 1e-15, "{s}");
        }
        assert!(parse_angle("abc").is_err());
    }

    #[test]
    fn geometry_files() {
        let g = parse_geometry("# corner\nkind = wedge\ntheta = 270deg\nr0 = 0.4\neps = 0.2\n").unwrap();
        assert!(g.contains([-0.2, 0.1]) && !g.contains([0.2, -0.1]));
        assert_eq!((g.r0, g.eps), (0.4, 0.2));
        let g = parse_geometry("kind=polygon\nvertices=0,0; 2,0; 2,1; 0,1\nsingular=0,0\n").unwrap();
        assert_eq!(g.singular, vec![[0.0, 0.0]]);
        assert_eq!(g.bbox.side, 2.0);
        assert!(parse_geometry("kind=wedge\n").is_err());
        assert!(parse_geometry("kind=wedge\ntheta=1\ncolour=red\n").is_err());
        assert!(parse_geometry("kind=polygon\nvertices=0,0;1,1;1,0;0,1\n").is_err());
        assert_eq!(parse_geometry("kind=lshape").unwrap(), DomainGeometry::l_shape_unit());
    }

    #[test]
    fn manifest_text() {
        let mut m = RunManifest::new("gen");
        m.param("level", 6).param("kind", "bump");
        let t = m.to_text();
        assert!(t.contains("param.kind = bump\nparam.level = 6\n"));
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn float_format() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
