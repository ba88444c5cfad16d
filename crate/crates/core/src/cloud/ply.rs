//! ASCII PLY reading and writing.
//!
//! Only the `vertex` element is interpreted: `x y z` are required and
//! `nx ny nz` are read as normals when all three are present. The frame is
//! carried in a `comment frame <camera|robot|world>` header line; clouds without
//! it are read as camera-frame.

use std::fmt::Write as _;
use std::path::Path;

use super::{Cloud, Frame, Point};
use crate::error::{PcfError, Result};

pub fn to_string(cloud: &Cloud) -> String {
    let mut s = String::new();
    let normals = cloud.normals();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "comment frame {}", cloud.frame().as_str());
    let _ = writeln!(s, "element vertex {}", cloud.len());
    s.push_str("property float x\nproperty float y\nproperty float z\n");
    if normals.is_some() {
        s.push_str("property float nx\nproperty float ny\nproperty float nz\n");
    }
    s.push_str("end_header\n");
    for (i, p) in cloud.points().iter().enumerate() {
        let _ = write!(s, "{} {} {}", p[0], p[1], p[2]);
        if let Some(n) = normals {
            let _ = write!(s, " {} {} {}", n[i][0], n[i][1], n[i][2]);
        }
        s.push('\n');
    }
    s
}

pub fn parse(text: &str, origin: &str) -> Result<Cloud> {
    let err = |msg: String| PcfError::parse(origin, msg);
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(err("missing `ply` magic".into()));
    }
    let mut frame = Frame::Camera;
    let mut vertex_count = None;
    let mut in_vertex = false;
    let mut props: Vec<String> = Vec::new();
    let mut header_done = false;
    for line in lines.by_ref() {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                if tok.next() != Some("ascii") {
                    return Err(err("only ascii PLY is supported".into()));
                }
            }
            Some("comment") => {
                if tok.next() == Some("frame") {
                    if let Some(f) = tok.next() {
                        frame = f.parse()?;
                    }
                }
            }
            Some("element") => {
                let name = tok.next().unwrap_or("");
                let count: usize = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| err(format!("bad element line `{line}`")))?;
                in_vertex = name == "vertex";
                if in_vertex {
                    vertex_count = Some(count);
                } else if vertex_count.is_none() {
                    return Err(err("elements before `vertex` are not supported".into()));
                }
            }
            Some("property") => {
                if in_vertex {
                    let name = tok.last().ok_or_else(|| err(format!("bad property line `{line}`")))?;
                    props.push(name.to_string());
                }
            }
            Some("end_header") => {
                header_done = true;
                break;
            }
            _ => {}
        }
    }
    if !header_done {
        return Err(err("missing end_header".into()));
    }
    let count = vertex_count.ok_or_else(|| err("no vertex element".into()))?;
    let col = |name: &str| props.iter().position(|p| p == name);
    let (ix, iy, iz) = match (col("x"), col("y"), col("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(err("vertex element lacks x/y/z".into())),
    };
    let normal_cols = match (col("nx"), col("ny"), col("nz")) {
        (Some(a), Some(b), Some(c)) => Some((a, b, c)),
        _ => None,
    };

    let mut points = Vec::with_capacity(count);
    let mut normals: Vec<Point> = Vec::new();
    let mut values = Vec::with_capacity(props.len());
    for i in 0..count {
        let line = lines
            .next()
            .ok_or_else(|| err(format!("expected {count} vertices, found {i}")))?;
        values.clear();
        for t in line.split_whitespace() {
            values.push(
                t.parse::<f64>()
                    .map_err(|e| err(format!("vertex {i}: `{t}`: {e}")))?,
            );
        }
        if values.len() < props.len() {
            return Err(err(format!("vertex {i}: {} values for {} properties", values.len(), props.len())));
        }
        points.push([values[ix], values[iy], values[iz]]);
        if let Some((a, b, c)) = normal_cols {
            normals.push([values[a], values[b], values[c]]);
        }
    }
    let cloud = Cloud::new(points, frame)?;
    if normal_cols.is_some() {
        // tolerate writers that store normals at single precision
        let normals = normals
            .into_iter()
            .map(|n| {
                let len = super::norm(n);
                if len > 0.0 {
                    [n[0] / len, n[1] / len, n[2] / len]
                } else {
                    n
                }
            })
            .collect();
        cloud.with_normals(normals)
    } else {
        Ok(cloud)
    }
}

pub fn write(path: impl AsRef<Path>, cloud: &Cloud) -> Result<()> {
    std::fs::write(path.as_ref(), to_string(cloud)).map_err(|e| PcfError::io(path, e))
}

pub fn read(path: impl AsRef<Path>) -> Result<Cloud> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| PcfError::io(path.as_ref(), e))?;
    parse(&text, &path.as_ref().display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_normals_is_exact() {
        let c = Cloud::new(vec![[0.1, -0.2, 1.0 / 3.0], [1e-9, 2.5, -7.0]], Frame::Robot)
            .unwrap()
            .with_normals(vec![[0.0, 0.0, 1.0], [0.6, 0.8, 0.0]])
            .unwrap();
        let back = parse(&to_string(&c), "mem").unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn reads_foreign_property_order() {
        let text = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float z\nproperty uchar red\n\
                    property float x\nproperty float y\nend_header\n3 255 1 2\n";
        let c = parse(text, "mem").unwrap();
        assert_eq!(c.points(), &[[1.0, 2.0, 3.0]]);
        assert_eq!(c.frame(), Frame::Camera);
    }

    #[test]
    fn rejects_truncated_body_and_binary() {
        let text = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n\
                    property float z\nend_header\n0 0 0\n";
        assert!(parse(text, "mem").is_err());
        assert!(parse("ply\nformat binary_little_endian 1.0\nend_header\n", "mem").is_err());
        assert!(parse("nope", "mem").is_err());
    }
}
