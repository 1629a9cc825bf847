//! Plain-text trajectory files.
//!
//! The first line is `n m T`. Each of the following `T` lines holds
//! `x_minus` (n values), `u` (m values) and `x_plus` (n values), separated by
//! spaces and printed with 17 significant digits so a reload is exact.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sysid::TrajectoryData;
use crate::Matrix;

pub fn format_dataset(data: &TrajectoryData) -> String {
    let (n, m, t) = (data.state_dim(), data.action_dim(), data.len());
    let mut out = String::with_capacity(t * (2 * n + m) * 26 + 32);
    let _ = writeln!(out, "{n} {m} {t}");
    for j in 0..t {
        let cols = [
            data.x_minus().column(j),
            data.u_minus().column(j),
            data.x_plus().column(j),
        ];
        let mut first = true;
        for col in cols {
            for v in col.iter() {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{v:.16e}");
            }
        }
        out.push('\n');
    }
    out
}

pub fn parse_dataset(text: &str) -> Result<TrajectoryData> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Dataset("empty file".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Dataset(format!("bad header `{header}`")))
        })
        .collect::<Result<_>>()?;
    let [n, m, t] = dims[..] else {
        return Err(Error::Dataset(format!(
            "header needs `n m T`, got `{header}`"
        )));
    };
    let width = 2 * n + m;
    let mut xm = Matrix::zeros(n, t);
    let mut um = Matrix::zeros(m, t);
    let mut xp = Matrix::zeros(n, t);
    let mut rows = 0;
    for (j, line) in lines.enumerate() {
        if j >= t {
            return Err(Error::Dataset(format!("more than {t} data lines")));
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::Dataset(format!("line {}: bad number `{s}`", j + 2)))
            })
            .collect::<Result<_>>()?;
        if vals.len() != width {
            return Err(Error::Dataset(format!(
                "line {}: expected {width} values, got {}",
                j + 2,
                vals.len()
            )));
        }
        for i in 0..n {
            xm[(i, j)] = vals[i];
            xp[(i, j)] = vals[n + m + i];
        }
        for i in 0..m {
            um[(i, j)] = vals[n + i];
        }
        rows += 1;
    }
    if rows != t {
        return Err(Error::Dataset(format!(
            "header promises {t} lines, found {rows}"
        )));
    }
    TrajectoryData::new(xm, xp, um)
}

pub fn save_dataset(path: &Path, data: &TrajectoryData) -> Result<()> {
    std::fs::write(path, format_dataset(data))?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<TrajectoryData> {
    parse_dataset(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envsim::BlackBoxEnv;
    use crate::sysid::collect_random_data;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_round_trip() {
        let env = BlackBoxEnv::unicycle();
        let data =
            collect_random_data(&env, 40, Some(10), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let text = format_dataset(&data);
        assert!(text.starts_with("3 2 40\n"));
        let back = parse_dataset(&text).unwrap();
        assert_eq!(back.x_minus(), data.x_minus());
        assert_eq!(back.x_plus(), data.x_plus());
        assert_eq!(back.u_minus(), data.u_minus());
    }

    #[test]
    fn malformed() {
        assert!(parse_dataset("").is_err());
        assert!(parse_dataset("1 1").is_err());
        assert!(parse_dataset("1 1 2\n0 0 0\n").is_err());
        assert!(parse_dataset("1 1 1\n0 0\n").is_err());
        assert!(parse_dataset("1 1 1\n0 x 0\n").is_err());
        assert!(parse_dataset("1 1 1\n0 0 0\n1 1 1\n").is_err());
    }
}
