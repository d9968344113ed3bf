//! On-disk formats: the two CSV tables and the raw field snapshot. All
//! three are deterministic byte-for-byte, so repeat runs of the same
//! config can be diffed directly.

use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use crate::experiments::{ConvergenceRow, EnergySample};
use crate::grid::{Field, GridError, GridSpec};

pub const ENERGY_HEADER: &str = "t,energy_original,energy_pseudo_tilde,mass,r,psi_hminus1";
pub const CONVERGENCE_HEADER: &str = "N,err_phi,rate_phi,err_gradlap,rate_gradlap,err_r,rate_r";

const SNAPSHOT_MAGIC: [u8; 6] = *b"MPFC1\0";

// 17 significant digits: enough to reproduce any f64 exactly on re-read.
fn sig17(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_sig17(v: Option<f64>) -> String {
    v.map(sig17).unwrap_or_default()
}

pub fn write_energy_csv(samples: &[EnergySample], mut sink: impl Write) -> io::Result<()> {
    writeln!(sink, "{ENERGY_HEADER}")?;
    for s in samples {
        writeln!(
            sink,
            "{},{},{},{},{},{}",
            sig17(s.t),
            sig17(s.energy_original),
            sig17(s.energy_pseudo_tilde),
            sig17(s.mass),
            sig17(s.r),
            sig17(s.psi_hminus1),
        )?;
    }
    Ok(())
}

pub fn write_convergence_csv(rows: &[ConvergenceRow], mut sink: impl Write) -> io::Result<()> {
    writeln!(sink, "{CONVERGENCE_HEADER}")?;
    for r in rows {
        writeln!(
            sink,
            "{},{},{},{},{},{},{}",
            r.resolution,
            sig17(r.err_phi),
            opt_sig17(r.rate_phi),
            sig17(r.err_gradlap),
            opt_sig17(r.rate_gradlap),
            sig17(r.err_r),
            opt_sig17(r.rate_r),
        )?;
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a snapshot file (bad magic)")]
    BadMagic,
    #[error("snapshot truncated: need {needed} bytes, file has {got}")]
    Truncated { needed: usize, got: usize },
    #[error("snapshot dimensions {nx} x {ny} overflow this platform")]
    Oversize { nx: u64, ny: u64 },
    #[error("snapshot has {extra} bytes past the promised payload")]
    TrailingBytes { extra: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Magic, little-endian u64 nx and ny, little-endian f64 lx and ly, then
/// the cells row by row (j outer, i inner), each a little-endian f64.
/// Bit patterns pass through untouched, signed zeros included.
pub fn write_snapshot(field: &Field, path: &Path) -> Result<(), SnapshotError> {
    let g = field.grid;
    let mut buf = Vec::with_capacity(6 + 32 + 8 * g.nx * g.ny);
    buf.extend_from_slice(&SNAPSHOT_MAGIC);
    buf.extend_from_slice(&(g.nx as u64).to_le_bytes());
    buf.extend_from_slice(&(g.ny as u64).to_le_bytes());
    buf.extend_from_slice(&g.lx.to_le_bytes());
    buf.extend_from_slice(&g.ly.to_le_bytes());
    for j in 0..g.ny {
        for i in 0..g.nx {
            buf.extend_from_slice(&field.data[[j, i]].to_le_bytes());
        }
    }
    std::fs::write(path, buf)?;
    Ok(())
}

/// Inverse of `write_snapshot`. The format stores geometry only, so the
/// returned field carries the reflecting boundary kind; callers that know
/// better can rewrap the data.
pub fn read_snapshot(path: &Path) -> Result<Field, SnapshotError> {
    let bytes = std::fs::read(path)?;
    let need = |needed: usize| -> Result<(), SnapshotError> {
        if bytes.len() < needed {
            Err(SnapshotError::Truncated {
                needed,
                got: bytes.len(),
            })
        } else {
            Ok(())
        }
    };
    need(6)?;
    if bytes[..6] != SNAPSHOT_MAGIC {
        return Err(SnapshotError::BadMagic);
    }
    need(38)?;
    let u = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
    let f = |at: usize| f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
    let (nx64, ny64) = (u(6), u(14));
    let cells = nx64
        .checked_mul(ny64)
        .filter(|c| *c <= (usize::MAX as u64 - 38) / 8)
        .ok_or(SnapshotError::Oversize { nx: nx64, ny: ny64 })?;
    let (nx, ny) = (nx64 as usize, ny64 as usize);
    let needed = 38 + 8 * cells as usize;
    need(needed)?;
    if bytes.len() > needed {
        return Err(SnapshotError::TrailingBytes {
            extra: bytes.len() - needed,
        });
    }
    let g = GridSpec::new(nx, ny, f(22), f(30), crate::grid::BoundaryKind::Neumann)?;
    let mut data = ndarray::Array2::zeros((ny, nx));
    for j in 0..ny {
        for i in 0..nx {
            data[[j, i]] = f(38 + 8 * (j * nx + i));
        }
    }
    Ok(Field { grid: g, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BoundaryKind;
    use rand::prelude::*;

    fn sample(t: f64) -> EnergySample {
        EnergySample {
            t,
            energy_original: 758.427_370_630_241_1,
            energy_pseudo_tilde: 0.1875,
            mass: -0.0,
            r: 1.0 / 3.0,
            psi_hminus1: 2.5e-13,
        }
    }

    #[test]
    fn energy_csv_shape_and_precision() {
        let mut buf = Vec::new();
        write_energy_csv(&[sample(0.0)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.split('\n').collect();
        // two content lines plus the empty tail after the final newline.
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], ENERGY_HEADER);
        assert_eq!(lines[2], "");
        assert!(!text.contains('\r'));
        let fields: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(fields.len(), 6);
        // every value survives the decimal round trip bit-exactly.
        let s = sample(0.0);
        let want = [
            s.t,
            s.energy_original,
            s.energy_pseudo_tilde,
            s.mass,
            s.r,
            s.psi_hminus1,
        ];
        for (text, orig) in fields.iter().zip(want) {
            let back: f64 = text.parse().unwrap();
            assert_eq!(back.to_bits(), orig.to_bits(), "field {text}");
        }
    }

    #[test]
    fn energy_csv_is_deterministic() {
        let rows = [sample(0.0), sample(0.05)];
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_energy_csv(&rows, &mut a).unwrap();
        write_energy_csv(&rows, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn convergence_csv_leaves_first_rates_empty() {
        let rows = [
            ConvergenceRow {
                resolution: 20,
                err_phi: 0.115,
                err_gradlap: 79.6,
                err_r: 2.15e-2,
                rate_phi: None,
                rate_gradlap: None,
                rate_r: None,
            },
            ConvergenceRow {
                resolution: 40,
                err_phi: 3.15e-2,
                err_gradlap: 22.0,
                err_r: 6.62e-3,
                rate_phi: Some(1.87),
                rate_gradlap: Some(1.85),
                rate_r: Some(1.70),
            },
        ];
        let mut buf = Vec::new();
        write_convergence_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CONVERGENCE_HEADER);
        let first: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(first[0], "20");
        assert_eq!(first[2], "");
        assert_eq!(first[4], "");
        assert_eq!(first[6], "");
        let second: Vec<&str> = lines[2].split(',').collect();
        assert_eq!(second[0], "40");
        assert!(!second[2].is_empty());
        let back: f64 = second[1].parse().unwrap();
        assert_eq!(back, 3.15e-2);
    }

    #[test]
    fn snapshot_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.snap");
        let g = GridSpec::new(5, 3, 2.0, 0.75, BoundaryKind::Periodic).unwrap();
        let mut rng = StdRng::seed_from_u64(11);
        let mut f = crate::verify::random_field(g, &mut rng);
        f.data[[0, 0]] = -0.0;
        f.data[[2, 4]] = 5e-324;
        f.data[[1, 2]] = -1.2345678901234567e300;
        write_snapshot(&f, &path).unwrap();
        let back = read_snapshot(&path).unwrap();
        assert_eq!(back.grid.nx, 5);
        assert_eq!(back.grid.ny, 3);
        assert_eq!(back.grid.lx, 2.0);
        assert_eq!(back.grid.ly, 0.75);
        for (a, b) in f.data.iter().zip(back.data.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(back.data[[0, 0]].is_sign_negative());
    }

    #[test]
    fn snapshot_2x2_is_70_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.snap");
        let g = GridSpec::new(2, 2, 1.0, 1.0, BoundaryKind::Neumann).unwrap();
        write_snapshot(&Field::constant(g, 0.25), &path).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 70);
    }

    #[test]
    fn snapshot_rejects_damage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.snap");
        let g = GridSpec::new(4, 4, 1.0, 1.0, BoundaryKind::Neumann).unwrap();
        write_snapshot(&Field::constant(g, 1.0), &path).unwrap();
        let good = std::fs::read(&path).unwrap();

        let bad_magic = path.with_file_name("bad_magic.snap");
        let mut b = good.clone();
        b[0] = b'X';
        std::fs::write(&bad_magic, &b).unwrap();
        assert!(matches!(
            read_snapshot(&bad_magic),
            Err(SnapshotError::BadMagic)
        ));

        let cut = path.with_file_name("cut.snap");
        std::fs::write(&cut, &good[..good.len() - 9]).unwrap();
        match read_snapshot(&cut) {
            Err(SnapshotError::Truncated { needed, got }) => {
                assert_eq!(needed, good.len());
                assert_eq!(got, good.len() - 9);
            }
            other => panic!("wrong result: {other:?}"),
        }

        let long = path.with_file_name("long.snap");
        let mut l = good.clone();
        l.extend_from_slice(&[0u8; 4]);
        std::fs::write(&long, &l).unwrap();
        assert!(matches!(
            read_snapshot(&long),
            Err(SnapshotError::TrailingBytes { extra: 4 })
        ));

        let huge = path.with_file_name("huge.snap");
        let mut h = good[..38].to_vec();
        h[6..14].copy_from_slice(&u64::MAX.to_le_bytes());
        std::fs::write(&huge, &h).unwrap();
        assert!(matches!(
            read_snapshot(&huge),
            Err(SnapshotError::Oversize { .. })
        ));
    }
}
