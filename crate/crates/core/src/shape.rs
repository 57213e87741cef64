//! Trajectory shape descriptors built from stacked forward differences.
//!
//! `D_r` concatenates the first `r` discrete derivatives of a trajectory
//! (velocity, acceleration, ...), each taken in frame units. Every block is
//! flattened point by point with the coordinates of a point kept together.

use std::fmt::Write as _;

use crate::tracking::Trajectory;
use crate::{Error, Result};

pub const MAX_ORDER: usize = 7;
pub const DEFAULT_ORDER_2D: usize = 4;
pub const DEFAULT_ORDER_DISPARITY: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeDescriptor {
    pub values: Vec<f64>,
    pub order: usize,
    /// Coordinates per trajectory point.
    pub n: usize,
    /// Trajectory length in steps.
    pub l: usize,
}

/// Length of `D_r` for an `n`-dimensional trajectory of `l` steps.
pub fn descriptor_dim(n: usize, l: usize, r: usize) -> usize {
    n * (1..=r).map(|j| l + 1 - j).sum::<usize>()
}

/// Forward difference `out[i] = seq[i+1] − seq[i]`.
pub fn derivative(seq: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if seq.len() < 2 {
        return Err(Error::InvalidArgument(format!("derivative needs at least 2 points, got {}", seq.len())));
    }
    Ok(seq.windows(2).map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| b - a).collect()).collect())
}

pub fn describe(traj: &Trajectory, r: usize) -> Result<ShapeDescriptor> {
    let l = traj.length();
    if r == 0 || r > MAX_ORDER {
        return Err(Error::InvalidArgument(format!("descriptor order {r} outside 1..={MAX_ORDER}")));
    }
    if r > l {
        return Err(Error::InvalidArgument(format!("descriptor order {r} exceeds trajectory length {l}")));
    }
    let n = traj.dim();
    let mut values = Vec::with_capacity(descriptor_dim(n, l, r));
    let mut current = traj.points.clone();
    for _ in 0..r {
        current = derivative(&current)?;
        values.extend(current.iter().flatten());
    }
    Ok(ShapeDescriptor { values, order: r, n, l })
}

/// Scales the descriptor so its absolute values sum to one (no-op for zeros).
pub fn normalize_magnitude(desc: &mut ShapeDescriptor) {
    let total: f64 = desc.values.iter().map(|v| v.abs()).sum();
    if total > 0.0 {
        desc.values.iter_mut().for_each(|v| *v /= total);
    }
}

/// A descriptor tagged with its video and class, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorRecord {
    pub clip_id: String,
    pub label: String,
    pub descriptor: ShapeDescriptor,
}

/// One line per descriptor: `clip_id label n l r v0 v1 ...`.
pub fn format_descriptors(records: &[DescriptorRecord]) -> String {
    let mut out = String::new();
    for rec in records {
        let d = &rec.descriptor;
        write!(out, "{} {} {} {} {}", rec.clip_id, rec.label, d.n, d.l, d.order).unwrap();
        for v in &d.values {
            write!(out, " {v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_descriptors(text: &str) -> Result<Vec<DescriptorRecord>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse(format!("descriptor line {}: {msg}", lineno + 1));
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() < 5 {
            return Err(err("expected clip_id label n l r values...".into()));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|e| err(format!("{s}: {e}")));
        let (n, l, r) = (num(f[2])?, num(f[3])?, num(f[4])?);
        let values = f[5..].iter().map(|s| s.parse::<f64>()).collect::<Result<Vec<_>, _>>().map_err(|e| err(e.to_string()))?;
        if r == 0 || r > l || values.len() != descriptor_dim(n, l, r) {
            return Err(err(format!("{} values do not fit n={n} l={l} r={r}", values.len())));
        }
        out.push(DescriptorRecord { clip_id: f[0].into(), label: f[1].into(), descriptor: ShapeDescriptor { values, order: r, n, l } });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::Camera;
    use proptest::prelude::*;

    fn traj(points: Vec<Vec<f64>>) -> Trajectory {
        Trajectory::new("c", Camera::Left, 0, points).unwrap()
    }

    #[test]
    fn derivative_examples() {
        let constant = vec![vec![3.0, -1.0]; 5];
        assert!(derivative(&constant).unwrap().iter().flatten().all(|&v| v == 0.0));
        let linear: Vec<Vec<f64>> = (0..6).map(|i| vec![1.0 + 2.0 * i as f64, -0.5 * i as f64]).collect();
        assert!(derivative(&linear).unwrap().iter().all(|p| p == &vec![2.0, -0.5]));
        assert!(derivative(&[vec![1.0, 1.0]]).is_err());
    }

    #[test]
    fn worked_example() {
        let t = traj(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![3.0, 1.0]]);
        let d = describe(&t, 2).unwrap();
        assert_eq!(d.values, vec![1.0, 0.0, 2.0, 1.0, 1.0, 1.0]);
        assert_eq!(d.values.len(), descriptor_dim(2, 2, 2));
        assert_eq!(descriptor_dim(2, 2, 2), 6);
    }

    #[test]
    fn linear_motion_has_zero_second_block() {
        for l in 2..12 {
            let t = traj((0..=l).map(|i| vec![4.0 + 1.5 * i as f64, 2.0 - 0.25 * i as f64]).collect());
            let d = describe(&t, 2).unwrap();
            assert!(d.values[2 * l..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn order_bounds() {
        let t = traj(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![3.0, 1.0]]);
        assert!(describe(&t, 3).is_err());
        assert!(describe(&t, 0).is_err());
    }

    #[test]
    fn normalization_is_opt_in() {
        let t = traj(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![3.0, 1.0]]);
        let mut d = describe(&t, 2).unwrap();
        normalize_magnitude(&mut d);
        assert!((d.values.iter().map(|v| v.abs()).sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn file_round_trip() {
        let t = traj((0..6).map(|i| vec![i as f64 * 0.1, (i * i) as f64 / 3.0, 1.0 / (i + 1) as f64]).collect());
        let rec = DescriptorRecord { clip_id: "v1".into(), label: "wave".into(), descriptor: describe(&t, 3).unwrap() };
        let text = format_descriptors(std::slice::from_ref(&rec));
        assert!(text.starts_with("v1 wave 3 5 3 "));
        assert_eq!(parse_descriptors(&text).unwrap(), vec![rec]);
        assert!(parse_descriptors("v1 wave 2 5 3 1 2 3").is_err());
    }

    fn arb_traj() -> impl Strategy<Value = (Trajectory, usize)> {
        (2usize..=3, 2usize..=20).prop_flat_map(|(n, l)| {
            (proptest::collection::vec(proptest::collection::vec(-100.0f64..100.0, n), l + 1), 1..=l.min(MAX_ORDER))
                .prop_map(|(pts, r)| (traj(pts), r))
        })
    }

    proptest! {
        #[test]
        fn translation_invariant((t, r) in arb_traj(), shift in proptest::collection::vec(-50i32..50, 3)) {
            let shifted = traj(t.points.iter().map(|p| p.iter().zip(&shift).map(|(v, s)| v + *s as f64).collect()).collect());
            let a = describe(&t, r).unwrap();
            let b = describe(&shifted, r).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
            }
        }

        #[test]
        fn dimension_formula((t, r) in arb_traj()) {
            let (n, l) = (t.dim(), t.length());
            prop_assert_eq!(describe(&t, r).unwrap().values.len(), n * (r * (l + 1) - r * (r + 1) / 2));
        }

        #[test]
        fn lower_order_is_a_prefix((t, r) in arb_traj()) {
            prop_assume!(r < t.length().min(MAX_ORDER));
            let a = describe(&t, r).unwrap();
            let b = describe(&t, r + 1).unwrap();
            prop_assert_eq!(&b.values[..a.values.len()], &a.values[..]);
        }

        #[test]
        fn derivative_matches_index_loop(seq in proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, 2), 2..30)) {
            let d = derivative(&seq).unwrap();
            prop_assert_eq!(d.len(), seq.len() - 1);
            for i in 0..d.len() {
                for k in 0..2 {
                    prop_assert_eq!(d[i][k], seq[i + 1][k] - seq[i][k]);
                }
            }
        }
    }
}
