//! Binary `ConfigField` snapshots.
//!
//! Layout, all little-endian: magic `CCQM`, format version (u32), particle count
//! N (u32), N spatial dimensions (u32), grid points M (u32), domain length L
//! (f64), N cell lengths (f64), f0 (f64), θ0 (f64), time (f64), then the
//! amplitudes row-major as interleaved re/im f64 pairs. Species, mass and
//! statistics are not stored; readers supply them.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{ConfigField, LatticeSpec, ParticleSpec};

pub const MAGIC: &[u8; 4] = b"CCQM";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_snapshot<W: Write>(field: &ConfigField, mut out: W) -> Result<()> {
    let lat = &field.lattice;
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(lat.n_particles() as u32).to_le_bytes())?;
    for p in &lat.particles {
        out.write_all(&(p.spatial_dim as u32).to_le_bytes())?;
    }
    out.write_all(&(lat.grid_points as u32).to_le_bytes())?;
    out.write_all(&lat.domain_length.to_le_bytes())?;
    for a in &lat.cell_lengths {
        out.write_all(&a.to_le_bytes())?;
    }
    for v in [lat.base_magnitude, lat.base_phase, field.time] {
        out.write_all(&v.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(16 * lat.n_points());
    for z in field.as_slice() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(input: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Reads a snapshot whose particles are described by `particles`, in stored order.
pub fn read_snapshot<R: Read>(mut input: R, particles: &[ParticleSpec]) -> Result<ConfigField> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut input)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported snapshot version {version}")));
    }
    let n = read_u32(&mut input)? as usize;
    if n != particles.len() {
        return Err(Error::Format(format!("snapshot holds {n} particles, {} specs supplied", particles.len())));
    }
    for (k, p) in particles.iter().enumerate() {
        let d = read_u32(&mut input)? as usize;
        if d != p.spatial_dim {
            return Err(Error::Format(format!("particle {k} has dimension {d} in the snapshot, {} in its spec", p.spatial_dim)));
        }
    }
    let m = read_u32(&mut input)? as usize;
    let l = read_f64(&mut input)?;
    let cells = (0..n).map(|_| read_f64(&mut input)).collect::<Result<Vec<_>>>()?;
    let f0 = read_f64(&mut input)?;
    let theta0 = read_f64(&mut input)?;
    let time = read_f64(&mut input)?;
    let lattice = LatticeSpec::new(particles.to_vec(), m, l, cells, f0, theta0)
        .map_err(|e| Error::Format(format!("snapshot header: {e}")))?;

    let count = lattice.n_points();
    let mut raw = vec![0u8; 16 * count];
    input.read_exact(&mut raw)?;
    let mut tail = [0u8; 1];
    if input.read(&mut tail)? != 0 {
        return Err(Error::Format("trailing bytes after amplitudes".into()));
    }
    let amps: Vec<Complex64> = raw
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            Complex64::new(re, im)
        })
        .collect();
    let arr = ArrayD::from_shape_vec(IxDyn(&lattice.shape()), amps).expect("lattice shape");
    ConfigField::new(lattice, arr, time)
}

pub fn save_snapshot(field: &ConfigField, path: &Path) -> Result<()> {
    write_snapshot(field, BufWriter::new(File::create(path)?))
}

pub fn load_snapshot(path: &Path, particles: &[ParticleSpec]) -> Result<ConfigField> {
    read_snapshot(BufReader::new(File::open(path)?), particles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Statistics;
    use std::f64::consts::PI;

    fn field() -> ConfigField {
        let ps = vec![
            ParticleSpec::new("e", Statistics::Fermion, 1.0, 2).unwrap(),
            ParticleSpec::new("p", Statistics::Distinguishable, 3.0, 1).unwrap(),
        ];
        let lat = LatticeSpec::new(ps, 8, 4.0, vec![1.0, 2.0], 0.01, PI / 8.0).unwrap();
        let mut f = ConfigField::from_fn(lat, |x| Complex64::new(x[0] - 0.3 * x[1], x[2].sin()));
        f.time = 2.25;
        f
    }

    #[test]
    fn round_trip_is_exact() {
        let f = field();
        let mut buf = Vec::new();
        write_snapshot(&f, &mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 4 + 2 * 4 + 4 + 8 + 2 * 8 + 3 * 8 + 16 * 512);
        let g = read_snapshot(&buf[..], &f.lattice.particles).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn header_layout() {
        let f = field();
        let mut buf = Vec::new();
        write_snapshot(&f, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"CCQM");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(buf[16..20].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[20..24].try_into().unwrap()), 8);
        assert_eq!(f64::from_le_bytes(buf[24..32].try_into().unwrap()), 4.0);
    }

    #[test]
    fn rejects_corruption() {
        let f = field();
        let mut buf = Vec::new();
        write_snapshot(&f, &mut buf).unwrap();
        let ps = &f.lattice.particles;

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_snapshot(&bad[..], ps), Err(Error::Format(_))));

        assert!(read_snapshot(&buf[..buf.len() - 1], ps).is_err());

        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(read_snapshot(&long[..], ps), Err(Error::Format(_))));

        assert!(matches!(read_snapshot(&buf[..], &ps[..1]), Err(Error::Format(_))));
    }
}
