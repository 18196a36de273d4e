//! Plain-text file formats shared by the command-line tool and the library.
//!
//! * point clouds: one `x y z [f1 .. fW]` row per line, `#` comments, and an
//!   optional `# features=W` header announcing feature columns;
//! * electrodes: one `NAME x y z` row per electrode in canonical order;
//! * contour sets: a line-oriented key/value document, see [`write_contours`];
//! * flat `key = value` configuration files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::electrodes::{Electrode, ElectrodeSet, N_ELECTRODES};
use crate::error::{Error, Result};
use crate::geometry::{Contour, ContourSet, PlanePose, Point3, PointCloud, View};

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn parse_f64(tok: &str, path: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::parse(path, line, format!("not a number: '{tok}'")))?;
    if !v.is_finite() {
        return Err(Error::parse(path, line, "non-finite value"));
    }
    Ok(v)
}

fn fmt_point(out: &mut String, p: Point3) {
    let _ = write!(out, "{} {} {}", p.x, p.y, p.z);
}

pub fn format_xyz(cloud: &PointCloud, header: &str) -> String {
    let mut s = String::new();
    for line in header.lines() {
        let _ = writeln!(s, "# {line}");
    }
    if let Some(f) = cloud.features() {
        let _ = writeln!(s, "# features={}", f.width());
    }
    for (i, p) in cloud.points.iter().enumerate() {
        fmt_point(&mut s, *p);
        if let Some(f) = cloud.features() {
            for v in f.row(i) {
                let _ = write!(s, " {v}");
            }
        }
        s.push('\n');
    }
    s
}

pub fn parse_xyz(text: &str, path: &str) -> Result<PointCloud> {
    let mut width = 0usize;
    let mut points = Vec::new();
    let mut feats = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            if let Some(w) = c.trim().strip_prefix("features=") {
                width = w
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(path, ln + 1, "bad features header"))?;
            }
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 + width {
            return Err(Error::parse(
                path,
                ln + 1,
                format!("expected {} columns, found {}", 3 + width, toks.len()),
            ));
        }
        let v = toks
            .iter()
            .map(|t| parse_f64(t, path, ln + 1))
            .collect::<Result<Vec<_>>>()?;
        points.push(Point3::new(v[0], v[1], v[2]));
        feats.extend_from_slice(&v[3..]);
    }
    if width > 0 {
        PointCloud::with_features(points, width, feats)
    } else {
        Ok(PointCloud::new(points))
    }
}

pub fn write_xyz(path: &Path, cloud: &PointCloud, header: &str) -> Result<()> {
    write_atomic(path, format_xyz(cloud, header).as_bytes())
}

pub fn read_xyz(path: &Path) -> Result<PointCloud> {
    parse_xyz(&read_to_string(path)?, &path.display().to_string())
}

pub fn format_electrodes(set: &ElectrodeSet, header: &str) -> String {
    let mut s = String::new();
    for line in header.lines() {
        let _ = writeln!(s, "# {line}");
    }
    for e in Electrode::ALL {
        let _ = write!(s, "{} ", e.name());
        fmt_point(&mut s, set.get(e));
        s.push('\n');
    }
    s
}

pub fn parse_electrodes(text: &str, path: &str) -> Result<ElectrodeSet> {
    let mut slots: [Option<Point3>; N_ELECTRODES] = [None; N_ELECTRODES];
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 4 {
            return Err(Error::parse(path, ln + 1, "expected NAME x y z"));
        }
        let e: Electrode = toks[0]
            .parse()
            .map_err(|_| Error::parse(path, ln + 1, format!("unknown electrode {}", toks[0])))?;
        let p = Point3::new(
            parse_f64(toks[1], path, ln + 1)?,
            parse_f64(toks[2], path, ln + 1)?,
            parse_f64(toks[3], path, ln + 1)?,
        );
        if slots[e.index()].replace(p).is_some() {
            return Err(Error::parse(path, ln + 1, format!("duplicate electrode {e}")));
        }
    }
    let mut positions = [Point3::ZERO; N_ELECTRODES];
    for (i, s) in slots.iter().enumerate() {
        positions[i] = s.ok_or_else(|| {
            Error::parse(path, 0, format!("missing electrode {}", Electrode::ALL[i]))
        })?;
    }
    Ok(ElectrodeSet::new(positions))
}

pub fn write_electrodes(path: &Path, set: &ElectrodeSet, header: &str) -> Result<()> {
    write_atomic(path, format_electrodes(set, header).as_bytes())
}

pub fn read_electrodes(path: &Path) -> Result<ElectrodeSet> {
    parse_electrodes(&read_to_string(path)?, &path.display().to_string())
}

/// Serialises a contour set.
///
/// ```text
/// contours 2
/// contour 0
/// view sax
/// closed 1
/// origin x y z
/// axis_u x y z
/// axis_v x y z
/// points 3
/// u v
/// ...
/// end
/// ```
pub fn format_contours(set: &ContourSet, header: &str) -> String {
    let mut s = String::new();
    for line in header.lines() {
        let _ = writeln!(s, "# {line}");
    }
    let _ = writeln!(s, "contours {}", set.contours.len());
    for (i, c) in set.contours.iter().enumerate() {
        let _ = writeln!(s, "contour {i}");
        let _ = writeln!(s, "view {}", c.view);
        let _ = writeln!(s, "closed {}", u8::from(c.closed));
        for (key, p) in [("origin", c.plane.origin), ("axis_u", c.plane.u), ("axis_v", c.plane.v)] {
            let _ = write!(s, "{key} ");
            fmt_point(&mut s, p);
            s.push('\n');
        }
        let _ = writeln!(s, "points {}", c.points.len());
        for uv in &c.points {
            let _ = writeln!(s, "{} {}", uv[0], uv[1]);
        }
        s.push_str("end\n");
    }
    s
}

pub fn parse_contours(text: &str, path: &str) -> Result<ContourSet> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let mut next = |expect: &str| -> Result<(usize, Vec<String>)> {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| Error::parse(path, 0, format!("unexpected end of file, wanted '{expect}'")))?;
        let toks: Vec<String> = l.split_whitespace().map(str::to_owned).collect();
        if !expect.is_empty() && toks[0] != expect {
            return Err(Error::parse(path, ln, format!("expected '{expect}', found '{}'", toks[0])));
        }
        Ok((ln, toks))
    };
    let count_of = |ln: usize, toks: &[String]| -> Result<usize> {
        toks.get(1)
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::parse(path, ln, "expected a count"))
    };
    let point_of = |ln: usize, toks: &[String]| -> Result<Point3> {
        if toks.len() != 4 {
            return Err(Error::parse(path, ln, "expected three coordinates"));
        }
        Ok(Point3::new(
            parse_f64(&toks[1], path, ln)?,
            parse_f64(&toks[2], path, ln)?,
            parse_f64(&toks[3], path, ln)?,
        ))
    };
    let (ln, t) = next("contours")?;
    let n = count_of(ln, &t)?;
    let mut contours = Vec::with_capacity(n);
    for _ in 0..n {
        next("contour")?;
        let (ln, t) = next("view")?;
        let view: View = t
            .get(1)
            .ok_or_else(|| Error::parse(path, ln, "missing view"))?
            .parse()
            .map_err(|e: Error| Error::parse(path, ln, e.to_string()))?;
        let (ln, t) = next("closed")?;
        let closed = match t.get(1).map(String::as_str) {
            Some("1") => true,
            Some("0") => false,
            _ => return Err(Error::parse(path, ln, "closed must be 0 or 1")),
        };
        let (ln, t) = next("origin")?;
        let origin = point_of(ln, &t)?;
        let (ln, t) = next("axis_u")?;
        let u = point_of(ln, &t)?;
        let (ln, t) = next("axis_v")?;
        let v = point_of(ln, &t)?;
        let plane = PlanePose::new(origin, u, v).map_err(|e| Error::parse(path, ln, e.to_string()))?;
        let (ln, t) = next("points")?;
        let m = count_of(ln, &t)?;
        let mut points = Vec::with_capacity(m);
        for _ in 0..m {
            let (ln, t) = next("")?;
            if t.len() != 2 {
                return Err(Error::parse(path, ln, "expected 'u v'"));
            }
            points.push([parse_f64(&t[0], path, ln)?, parse_f64(&t[1], path, ln)?]);
        }
        next("end")?;
        let c = Contour {
            view,
            plane,
            points,
            closed,
        };
        c.validate().map_err(|e| Error::parse(path, ln, e.to_string()))?;
        contours.push(c);
    }
    Ok(ContourSet { contours })
}

pub fn write_contours(path: &Path, set: &ContourSet, header: &str) -> Result<()> {
    write_atomic(path, format_contours(set, header).as_bytes())
}

pub fn read_contours(path: &Path) -> Result<ContourSet> {
    parse_contours(&read_to_string(path)?, &path.display().to_string())
}

/// Parses `key = value` lines; `#` starts a comment. Keys keep file order.
pub fn parse_key_values(text: &str, path: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(path, ln + 1, "expected 'key = value'"))?;
        let k = k.trim().to_owned();
        if out.iter().any(|(e, _)| *e == k) {
            return Err(Error::parse(path, ln + 1, format!("duplicate key '{k}'")));
        }
        out.push((k, v.trim().to_owned()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn xyz_round_trips_bit_exact(v in prop::collection::vec(prop::array::uniform3(-1e6..1e6f64), 1..50)) {
            let cloud = PointCloud::new(v.into_iter().map(Point3::from_array).collect());
            let back = parse_xyz(&format_xyz(&cloud, "test"), "mem").unwrap();
            prop_assert_eq!(back, cloud);
        }
    }

    #[test]
    fn xyz_with_features() {
        let c = PointCloud::with_features(
            vec![Point3::new(1.0, 2.0, 3.0), Point3::new(4.0, 5.0, 6.0)],
            2,
            vec![0.5, 0.25, -1.0, 7.0],
        )
        .unwrap();
        let back = parse_xyz(&format_xyz(&c, ""), "mem").unwrap();
        assert_eq!(back, c);
        assert!(parse_xyz("1 2\n", "mem").is_err());
    }

    #[test]
    fn contours_round_trip() {
        let plane = PlanePose::new(
            Point3::new(1.0, 2.0, 3.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        )
        .unwrap();
        let set = ContourSet {
            contours: vec![Contour {
                view: View::Lax3ch,
                plane,
                points: vec![[0.1, 0.2], [0.3, -0.4], [1.0 / 3.0, 2.0]],
                closed: false,
            }],
        };
        let back = parse_contours(&format_contours(&set, "hdr"), "mem").unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn electrodes_need_all_ten() {
        let set = ElectrodeSet::new(std::array::from_fn(|i| Point3::new(i as f64, 0.5, -1.0)));
        let text = format_electrodes(&set, "");
        assert_eq!(parse_electrodes(&text, "mem").unwrap(), set);
        let missing: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
        assert!(parse_electrodes(&missing, "mem").is_err());
    }

    #[test]
    fn key_values_reject_duplicates() {
        let kv = parse_key_values("a = 1\n# c\nb=two # tail\n", "mem").unwrap();
        assert_eq!(kv, vec![("a".into(), "1".into()), ("b".into(), "two".into())]);
        assert!(parse_key_values("a=1\na=2\n", "mem").is_err());
        assert!(parse_key_values("nonsense\n", "mem").is_err());
    }
}
