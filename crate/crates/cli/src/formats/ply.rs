//! Labeled point clouds as PLY.
//!
//! Written files are binary little endian with one `vertex` element:
//!
//! ```text
//! property float x / y / z        mm
//! property uchar red / green / blue
//! property uchar label            0 background, 1 obstruction
//! property uint frame             optional: source keyframe id
//! property float distance         optional: heatmap distance, mm
//! ```
//!
//! The reader accepts ascii and both binary byte orders, any scalar type for
//! any property, and skips list properties and other elements. Only `x y z`
//! are required; a missing `label` means background.

use airmap::geometry::{Label, LabeledPointCloud, Vec3};

pub const OBSTRUCTION_RGB: [u8; 3] = [255, 0, 0];
pub const BACKGROUND_RGB: [u8; 3] = [160, 160, 160];

pub fn label_color(label: Label) -> [u8; 3] {
    match label {
        Label::Obstruction => OBSTRUCTION_RGB,
        Label::Background => BACKGROUND_RGB,
    }
}

/// A cloud plus the optional per-vertex channels carried in the file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlyCloud {
    pub cloud: LabeledPointCloud,
    /// `None` writes label-derived colors.
    pub colors: Option<Vec<[u8; 3]>>,
    pub frames: Option<Vec<u32>>,
    pub distances: Option<Vec<f32>>,
}

impl PlyCloud {
    pub fn new(cloud: LabeledPointCloud) -> Self {
        Self {
            cloud,
            ..Self::default()
        }
    }
}

pub fn encode(ply: &PlyCloud) -> Result<Vec<u8>, String> {
    let n = ply.cloud.len();
    let check = |what: &str, len: Option<usize>| match len {
        Some(l) if l != n => Err(format!("{what} has {l} entries for {n} points")),
        _ => Ok(()),
    };
    check("colors", ply.colors.as_ref().map(Vec::len))?;
    check("frames", ply.frames.as_ref().map(Vec::len))?;
    check("distances", ply.distances.as_ref().map(Vec::len))?;

    let mut header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {n}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\n\
         property uchar label\n"
    );
    if ply.frames.is_some() {
        header.push_str("property uint frame\n");
    }
    if ply.distances.is_some() {
        header.push_str("property float distance\n");
    }
    header.push_str("end_header\n");

    let mut out = header.into_bytes();
    out.reserve(n * 20);
    for (i, (p, label)) in ply.cloud.iter().enumerate() {
        for c in [p.x, p.y, p.z] {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
        let rgb = ply.colors.as_ref().map_or(label_color(label), |c| c[i]);
        out.extend_from_slice(&rgb);
        out.push(label.as_u8());
        if let Some(f) = &ply.frames {
            out.extend_from_slice(&f[i].to_le_bytes());
        }
        if let Some(d) = &ply.distances {
            out.extend_from_slice(&d[i].to_le_bytes());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Format {
    Ascii,
    BinaryLe,
    BinaryBe,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn decode(self, b: &[u8], little: bool) -> f64 {
        macro_rules! num {
            ($t:ty, $n:expr) => {{
                let a: [u8; $n] = b[..$n].try_into().expect("sized slice");
                (if little {
                    <$t>::from_le_bytes(a)
                } else {
                    <$t>::from_be_bytes(a)
                }) as f64
            }};
        }
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => num!(i16, 2),
            Scalar::U16 => num!(u16, 2),
            Scalar::I32 => num!(i32, 4),
            Scalar::U32 => num!(u32, 4),
            Scalar::F32 => num!(f32, 4),
            Scalar::F64 => num!(f64, 8),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar(Scalar, String),
    List(Scalar, Scalar),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    format: Format,
    elements: Vec<Element>,
    body_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, String> {
    let mut pos = 0;
    let mut next_line = || -> Option<String> {
        if pos >= bytes.len() {
            return None;
        }
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map_or(bytes.len(), |i| pos + i);
        let line = String::from_utf8_lossy(&bytes[pos..end])
            .trim_end_matches('\r')
            .to_string();
        pos = (end + 1).min(bytes.len());
        Some(line)
    };
    if next_line().as_deref() != Some("ply") {
        return Err("not a PLY file (missing 'ply' magic)".into());
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let line = next_line().ok_or("truncated header: missing end_header")?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", f, _version] => {
                format = Some(match *f {
                    "ascii" => Format::Ascii,
                    "binary_little_endian" => Format::BinaryLe,
                    "binary_big_endian" => Format::BinaryBe,
                    other => return Err(format!("unknown PLY format '{other}'")),
                });
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|e| format!("bad count for element '{name}': {e}"))?,
                properties: Vec::new(),
            }),
            ["property", "list", ct, it, _name] => {
                let el = elements.last_mut().ok_or("property before any element")?;
                let ty = |s: &str| Scalar::parse(s).ok_or_else(|| format!("unknown type '{s}'"));
                el.properties
                    .push(Property::List(ty(ct)?, ty(it)?));
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or("property before any element")?;
                let t = Scalar::parse(ty).ok_or_else(|| format!("unknown type '{ty}'"))?;
                el.properties.push(Property::Scalar(t, name.to_string()));
            }
            ["end_header"] => break,
            _ => return Err(format!("unrecognized header line '{line}'")),
        }
    }
    Ok(Header {
        format: format.ok_or("missing format line")?,
        elements,
        body_start: pos,
    })
}

/// Source of scalar values for the body, in file order.
trait Body {
    fn scalar(&mut self, t: Scalar) -> Result<f64, String>;

    fn skip_list(&mut self, count_t: Scalar, item_t: Scalar) -> Result<(), String> {
        let n = self.scalar(count_t)?;
        if !(n >= 0.0 && n.fract() == 0.0) {
            return Err(format!("invalid list length {n}"));
        }
        for _ in 0..n as usize {
            self.scalar(item_t)?;
        }
        Ok(())
    }
}

struct Binary<'a> {
    data: &'a [u8],
    pos: usize,
    little: bool,
}

impl Body for Binary<'_> {
    fn scalar(&mut self, t: Scalar) -> Result<f64, String> {
        let end = self.pos + t.size();
        let b = self
            .data
            .get(self.pos..end)
            .ok_or("unexpected end of binary data")?;
        self.pos = end;
        Ok(t.decode(b, self.little))
    }
}

struct Ascii<'a> {
    tokens: std::str::SplitAsciiWhitespace<'a>,
}

impl Body for Ascii<'_> {
    fn scalar(&mut self, _t: Scalar) -> Result<f64, String> {
        let tok = self.tokens.next().ok_or("unexpected end of ascii data")?;
        tok.parse().map_err(|e| format!("bad ascii value '{tok}': {e}"))
    }
}

/// Column of each recognized vertex property, if present.
#[derive(Default)]
struct Columns {
    xyz: [Option<usize>; 3],
    rgb: [Option<usize>; 3],
    label: Option<usize>,
    frame: Option<usize>,
    distance: Option<usize>,
}

fn columns(el: &Element) -> Columns {
    let mut c = Columns::default();
    for (i, p) in el.properties.iter().enumerate() {
        let Property::Scalar(_, name) = p else { continue };
        let slot = match name.as_str() {
            "x" => &mut c.xyz[0],
            "y" => &mut c.xyz[1],
            "z" => &mut c.xyz[2],
            "red" => &mut c.rgb[0],
            "green" => &mut c.rgb[1],
            "blue" => &mut c.rgb[2],
            "label" => &mut c.label,
            "frame" => &mut c.frame,
            "distance" => &mut c.distance,
            _ => continue,
        };
        *slot = Some(i);
    }
    c
}

fn as_int(v: f64, what: &str, max: f64) -> Result<f64, String> {
    if v.fract() == 0.0 && (0.0..=max).contains(&v) {
        Ok(v)
    } else {
        Err(format!("invalid {what} value {v}"))
    }
}

pub fn decode(bytes: &[u8]) -> Result<PlyCloud, String> {
    let header = parse_header(bytes)?;
    let body = &bytes[header.body_start..];
    let text;
    let mut reader: Box<dyn Body> = match header.format {
        Format::Ascii => {
            text = std::str::from_utf8(body).map_err(|e| format!("ascii body: {e}"))?;
            Box::new(Ascii {
                tokens: text.split_ascii_whitespace(),
            })
        }
        f => Box::new(Binary {
            data: body,
            pos: 0,
            little: f == Format::BinaryLe,
        }),
    };

    let mut out: Option<PlyCloud> = None;
    let mut row = Vec::new();
    for el in &header.elements {
        let is_vertex = el.name == "vertex" && out.is_none();
        let cols = columns(el);
        if is_vertex && cols.xyz.iter().any(Option::is_none) {
            return Err("vertex element lacks x, y or z".into());
        }
        let has_rgb = cols.rgb.iter().all(Option::is_some);
        let mut points = Vec::new();
        let mut labels = Vec::new();
        let mut colors = Vec::new();
        let mut frames = Vec::new();
        let mut distances = Vec::new();
        for r in 0..el.count {
            row.clear();
            for p in &el.properties {
                match p {
                    Property::Scalar(t, _) => row.push(reader.scalar(*t)?),
                    Property::List(ct, it) => {
                        reader.skip_list(*ct, *it)?;
                        row.push(f64::NAN);
                    }
                }
            }
            if !is_vertex {
                continue;
            }
            let at = |c: Option<usize>| c.map(|i| row[i]);
            let [x, y, z] = cols.xyz.map(|c| row[c.expect("checked above")]);
            points.push(Vec3::new(x, y, z));
            let label = match at(cols.label) {
                None => Label::Background,
                Some(v) => Label::from_u8(as_int(v, "label", 1.0)? as u8)
                    .ok_or_else(|| format!("vertex {r}: invalid label {v}"))?,
            };
            labels.push(label);
            if has_rgb {
                let mut rgb = [0u8; 3];
                for (k, c) in cols.rgb.iter().enumerate() {
                    rgb[k] = as_int(row[c.expect("checked")], "color", 255.0)? as u8;
                }
                colors.push(rgb);
            }
            if let Some(v) = at(cols.frame) {
                frames.push(as_int(v, "frame", u32::MAX as f64)? as u32);
            }
            if let Some(v) = at(cols.distance) {
                distances.push(v as f32);
            }
        }
        if is_vertex {
            let cloud = LabeledPointCloud::from_parts(points, labels).map_err(|e| e.to_string())?;
            out = Some(PlyCloud {
                cloud,
                colors: has_rgb.then_some(colors),
                frames: cols.frame.is_some().then_some(frames),
                distances: cols.distance.is_some().then_some(distances),
            });
        }
    }
    out.ok_or_else(|| "no vertex element".into())
}
