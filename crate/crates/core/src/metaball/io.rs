//! `.mball` text format: a `metaball <n>` line, then `k x y z` per control
//! point. Numbers use the shortest representation that parses back exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{ControlPoint, MetaballModel};
use crate::{Error, Result, Vec3};

pub fn write_model(model: &MetaballModel) -> String {
    let mut out = format!("metaball {}\n", model.len());
    for c in model.control_points() {
        writeln!(out, "{:?} {:?} {:?} {:?}", c.k, c.x.x, c.x.y, c.x.z).unwrap();
    }
    out
}

pub fn parse_model(text: &str) -> Result<MetaballModel> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty metaball file".into()))?;
    let n = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["metaball", n] => n
            .parse::<usize>()
            .map_err(|_| Error::Format(format!("bad control point count {n:?}")))?,
        _ => return Err(Error::Format(format!("bad metaball header {header:?}"))),
    };
    let mut points = Vec::with_capacity(n);
    for line in lines {
        let v: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format(format!("bad control point line {line:?}")))?;
        if v.len() != 4 {
            return Err(Error::Format(format!("expected `k x y z`, got {line:?}")));
        }
        points.push(ControlPoint::new(v[0], Vec3::new(v[1], v[2], v[3])));
    }
    if points.len() != n {
        return Err(Error::Format(format!(
            "header declares {n} control points, file has {}",
            points.len()
        )));
    }
    MetaballModel::new(points)
}

pub fn load_model(path: &Path) -> Result<MetaballModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&text)
}

pub fn save_model(model: &MetaballModel, path: &Path) -> Result<()> {
    crate::fsutil::write_atomic(path, write_model(model).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn format_is_line_oriented() {
        let m = MetaballModel::new(vec![ControlPoint::new(4.0, Vec3::new(1.0, 2.0, 0.1))]).unwrap();
        assert_eq!(write_model(&m), "metaball 1\n4.0 1.0 2.0 0.1\n");
    }

    #[test]
    fn count_mismatch_is_rejected() {
        assert!(parse_model("metaball 2\n1 0 0 0\n").is_err());
        assert!(parse_model("metaballs 1\n1 0 0 0\n").is_err());
        assert!(parse_model("metaball 1\n1 0 0\n").is_err());
    }

    proptest! {
        #[test]
        fn text_round_trip_is_bit_exact(
            raw in prop::collection::vec((-1e6f64..1e6, -1e3f64..1e3, -1e3f64..1e3, -1e3f64..1e3), 1..8)
        ) {
            let m = MetaballModel::new(
                raw.iter().map(|&(k, x, y, z)| ControlPoint::new(k, Vec3::new(x, y, z))).collect(),
            ).unwrap();
            let back = parse_model(&write_model(&m)).unwrap();
            for (a, b) in m.control_points().iter().zip(back.control_points()) {
                prop_assert_eq!(a.k.to_bits(), b.k.to_bits());
                for i in 0..3 {
                    prop_assert_eq!(a.x[i].to_bits(), b.x[i].to_bits());
                }
            }
        }
    }
}
