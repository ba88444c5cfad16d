//! Sources of the coarse "complete object" cloud fed to the feature layer.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::cloud::{fps, ply, Cloud, Point};
use crate::error::{argument, validation, PcfError, Result};

pub const COMPLETION_POINTS: usize = 1024;

/// A partial cloud of exactly `count` points plus the camera viewing
/// direction expressed in the cloud's frame.
#[derive(Clone, Debug)]
pub struct CompletionRequest {
    partial: Cloud,
    view_dir: Point,
}

impl CompletionRequest {
    pub fn new(partial: Cloud, view_dir: Point, count: usize) -> Result<Self> {
        if partial.len() != count {
            return validation(format!("completion input has {} points, expected {count}", partial.len()));
        }
        let n = crate::cloud::norm(view_dir);
        if (n - 1.0).abs() > 1e-9 {
            return validation(format!("view direction must be unit, has norm {n}"));
        }
        Ok(CompletionRequest { partial, view_dir })
    }

    pub fn partial(&self) -> &Cloud {
        &self.partial
    }

    pub fn view_dir(&self) -> Point {
        self.view_dir
    }
}

pub trait CompletionProvider {
    fn complete(&self, req: &CompletionRequest) -> Result<Cloud>;
}

/// Where the mirror plane (normal = view direction) is anchored.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MirrorAnchor {
    /// Through the partial centroid.
    #[default]
    Centroid,
    /// Through the partial point deepest along the view direction.
    Rear,
}

impl FromStr for MirrorAnchor {
    type Err = PcfError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centroid" => Ok(MirrorAnchor::Centroid),
            "rear" => Ok(MirrorAnchor::Rear),
            other => argument(format!("unknown mirror anchor `{other}` (centroid|rear)")),
        }
    }
}

/// `p + 2((o − p)·u)u`: reflection through the plane with normal `u` that
/// contains `o`.
pub fn reflect(p: Point, o: Point, u: Point) -> Point {
    let s = 2.0 * ((o[0] - p[0]) * u[0] + (o[1] - p[1]) * u[1] + (o[2] - p[2]) * u[2]);
    [p[0] + s * u[0], p[1] + s * u[1], p[2] + s * u[2]]
}

/// Mirror-symmetry completion: reflect every partial point across the plane
/// perpendicular to the view direction, take the union with the partial
/// cloud and FPS it back down to `count` points.
pub fn mirror_complete(req: &CompletionRequest, anchor: MirrorAnchor, count: usize) -> Result<Cloud> {
    let partial = req.partial();
    let u = req.view_dir();
    let anchor_point = match anchor {
        MirrorAnchor::Centroid => partial
            .centroid()
            .ok_or_else(|| PcfError::Argument("mirror completion of an empty cloud".into()))?,
        MirrorAnchor::Rear => *partial
            .points()
            .iter()
            .max_by(|a, b| crate::cloud::dot(**a, u).total_cmp(&crate::cloud::dot(**b, u)))
            .ok_or_else(|| PcfError::Argument("mirror completion of an empty cloud".into()))?,
    };
    let mut union = partial.points().to_vec();
    union.extend(partial.points().iter().map(|&p| reflect(p, anchor_point, u)));
    let union = Cloud::new(union, partial.frame())?;
    if count > union.len() {
        return validation(format!("cannot draw {count} points from a union of {}", union.len()));
    }
    Ok(union.select(&fps(&union, count, 0)?))
}

/// Reads an externally computed completion, FPS-downsampled to `count`.
pub fn load_completion(path: impl AsRef<Path>, count: usize) -> Result<Cloud> {
    let cloud = ply::read(path.as_ref())?;
    if cloud.len() < count {
        return validation(format!(
            "completion {} has {} points, need at least {count}",
            path.as_ref().display(),
            cloud.len()
        ));
    }
    if cloud.len() == count {
        return Ok(cloud);
    }
    Ok(cloud.select(&fps(&cloud, count, 0)?))
}

/// Provider choice as given on the command line: `mirror` or `file:<path>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CompletionSource {
    Mirror(MirrorAnchor),
    File(PathBuf),
}

impl FromStr for CompletionSource {
    type Err = PcfError;
    fn from_str(s: &str) -> Result<Self> {
        if s == "mirror" {
            return Ok(CompletionSource::Mirror(MirrorAnchor::Centroid));
        }
        if let Some(anchor) = s.strip_prefix("mirror:") {
            return Ok(CompletionSource::Mirror(anchor.parse()?));
        }
        match s.strip_prefix("file:") {
            Some(p) if !p.is_empty() => Ok(CompletionSource::File(PathBuf::from(p))),
            _ => argument(format!("unknown completion source `{s}` (mirror[:anchor] | file:<path>)")),
        }
    }
}

pub struct Provider {
    pub source: CompletionSource,
    pub count: usize,
}

impl CompletionProvider for Provider {
    fn complete(&self, req: &CompletionRequest) -> Result<Cloud> {
        match &self.source {
            CompletionSource::Mirror(anchor) => mirror_complete(req, *anchor, self.count),
            CompletionSource::File(path) => {
                let c = load_completion(path, self.count)?;
                if c.frame() != req.partial().frame() {
                    return validation(format!(
                        "completion is in the {} frame, partial in the {} frame",
                        c.frame().as_str(),
                        req.partial().frame().as_str()
                    ));
                }
                Ok(c)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Frame;

    #[test]
    fn reflection_examples() {
        let c = [0.3, -0.2, 0.7];
        assert_eq!(reflect(c, c, [0.0, 0.0, 1.0]), c);
        let u = [0.0, 0.0, 1.0];
        let o = [0.0, 0.0, 0.5];
        assert_eq!(reflect([0.0, 0.0, 1.0], o, u), [0.0, 0.0, 0.0]);
        assert_eq!(reflect([0.0, 0.0, 0.0], o, u), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn single_point_completion_is_a_fixed_point() {
        let partial = Cloud::new(vec![[0.1, 0.2, 0.3]], Frame::Camera).unwrap();
        let req = CompletionRequest::new(partial, [0.0, 0.0, 1.0], 1).unwrap();
        let out = mirror_complete(&req, MirrorAnchor::Centroid, 1).unwrap();
        assert_eq!(out.points(), &[[0.1, 0.2, 0.3]]);
    }

    #[test]
    fn request_validation() {
        let partial = Cloud::new(vec![[0.0; 3]; 3], Frame::Camera).unwrap();
        assert!(CompletionRequest::new(partial.clone(), [0.0, 0.0, 1.0], 4).is_err());
        assert!(CompletionRequest::new(partial, [0.0, 0.0, 2.0], 3).is_err());
    }

    #[test]
    fn source_parsing() {
        assert_eq!("mirror".parse::<CompletionSource>().unwrap(), CompletionSource::Mirror(MirrorAnchor::Centroid));
        assert_eq!("mirror:rear".parse::<CompletionSource>().unwrap(), CompletionSource::Mirror(MirrorAnchor::Rear));
        assert_eq!("file:a.ply".parse::<CompletionSource>().unwrap(), CompletionSource::File("a.ply".into()));
        assert!("file:".parse::<CompletionSource>().is_err());
        assert!("pcn".parse::<CompletionSource>().is_err());
    }
}
