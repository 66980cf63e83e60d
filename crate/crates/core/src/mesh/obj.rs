//! Minimal Wavefront OBJ reader/writer for triangle meshes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{TriMesh, Vec3};
use crate::error::{Error, Result};

pub fn load_obj(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, path)
}

/// Parses OBJ text. `origin` is only used for error messages.
pub fn parse_obj(text: &str, origin: &Path) -> Result<TriMesh> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut positions = Vec::new();
    let mut faces = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        let Some(tag) = tokens.next() else { continue };
        match tag {
            "v" => {
                let mut xyz = [0.0; 3];
                for c in &mut xyz {
                    let tok = tokens
                        .next()
                        .ok_or_else(|| parse_err(lineno, "vertex needs three coordinates".into()))?;
                    *c = tok
                        .parse()
                        .map_err(|_| parse_err(lineno, format!("bad coordinate `{tok}`")))?;
                }
                positions.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
            }
            "f" => {
                let mut poly = Vec::new();
                for tok in tokens {
                    let idx = tok.split('/').next().unwrap_or("");
                    let i: i64 = idx
                        .parse()
                        .map_err(|_| parse_err(lineno, format!("bad face index `{tok}`")))?;
                    let resolved = match i {
                        0 => return Err(parse_err(lineno, "face index 0 is invalid".into())),
                        i if i > 0 => i - 1,
                        i => positions.len() as i64 + i,
                    };
                    if resolved < 0 || resolved as usize >= positions.len() {
                        return Err(parse_err(lineno, format!("face index {i} out of range")));
                    }
                    poly.push(resolved as usize);
                }
                if poly.len() < 3 {
                    return Err(parse_err(lineno, "face needs at least three vertices".into()));
                }
                for k in 1..poly.len() - 1 {
                    faces.push([poly[0], poly[k], poly[k + 1]]);
                }
            }
            "vn" | "vt" | "vp" | "o" | "g" | "s" | "mtllib" | "usemtl" | "l" => {}
            other => log::debug!("{}:{lineno}: ignoring `{other}` record", origin.display()),
        }
    }
    TriMesh::new(positions, faces).map_err(|e| match e {
        Error::MalformedMesh(m) => Error::MalformedMesh(format!("{}: {m}", origin.display())),
        e => e,
    })
}

/// Formats like C's `%.9g`.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.8e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let fixed = format!("{:.*}", decimals, x);
        strip_zeros(&fixed).to_string()
    } else {
        let m = strip_zeros(mantissa);
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_obj(mesh: &TriMesh) -> String {
    let mut out = String::with_capacity(mesh.num_vertices() * 40 + mesh.num_faces() * 20);
    for p in mesh.positions() {
        let _ = writeln!(out, "v {} {} {}", fmt_sig9(p.x), fmt_sig9(p.y), fmt_sig9(p.z));
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

pub fn save_obj(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_obj(mesh)).map_err(|e| Error::io(path, e))
}
