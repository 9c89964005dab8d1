//! `.mbvae` weights files.
//!
//! Little-endian: magic `MBVA`, version, n, latent width and layer count
//! as `u32`; per layer its rows and cols as `u32`, the row-major weights
//! and the biases as `f64`; then the coordinate and weight scales. A
//! leaky slope other than the default follows as one more `f64`.

use std::path::Path;

use super::network::{Architecture, Network};
use super::serialize::Scaler;
use crate::fsutil::write_atomic;
use crate::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"MBVA";
const VERSION: u32 = 1;
const DEFAULT_SLOPE: f64 = 0.01;

pub fn encode_weights(network: &Network, scaler: &Scaler) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + 8 * network.params.len());
    out.extend_from_slice(WEIGHTS_MAGIC);
    let views = network.layer_views();
    for v in [VERSION, (network.input_dim() / 4) as u32, network.latent_dim() as u32, views.len() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for (rows, cols, w, b) in views {
        out.extend_from_slice(&(rows as u32).to_le_bytes());
        out.extend_from_slice(&(cols as u32).to_le_bytes());
        for x in w.iter().chain(b) {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out.extend_from_slice(&scaler.coordinate_scale.to_le_bytes());
    out.extend_from_slice(&scaler.k_scale.to_le_bytes());
    if network.leaky_slope != DEFAULT_SLOPE {
        out.extend_from_slice(&network.leaky_slope.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("weights file is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_weights(bytes: &[u8]) -> Result<(Network, Scaler)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != WEIGHTS_MAGIC {
        return Err(Error::Format("not a weights file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported weights version {version}")));
    }
    let n = r.u32()? as usize;
    let latent = r.u32()? as usize;
    let count = r.u32()? as usize;
    let mut shapes = Vec::with_capacity(count.min(1024));
    let mut params = Vec::new();
    for _ in 0..count {
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let len = rows
            .checked_mul(cols)
            .and_then(|w| w.checked_add(rows))
            .ok_or_else(|| Error::Format("layer size overflows".into()))?;
        let raw = r.take(len.checked_mul(8).ok_or_else(|| Error::Format("layer size overflows".into()))?)?;
        params.extend(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))));
        shapes.push((rows, cols));
    }
    let scaler = Scaler::new(r.f64()?)?;
    let k_scale = r.f64()?;
    let slope = match bytes.len() - r.pos {
        0 => DEFAULT_SLOPE,
        8 => r.f64()?,
        extra => return Err(Error::Format(format!("{extra} unexpected trailing bytes"))),
    };
    if (k_scale - scaler.k_scale).abs() > 1e-12 * scaler.k_scale {
        return Err(Error::Format("weight scale is not the square of the coordinate scale".into()));
    }
    if let Some(i) = params.iter().position(|p| !p.is_finite()) {
        return Err(Error::NonFinite(format!("weight {i}")));
    }
    let arch = Architecture::from_layer_shapes(&shapes, latent)?;
    if arch.input != 4 * n {
        return Err(Error::ShapeMismatch { expected: 4 * n, found: arch.input });
    }
    let network = Network::from_params(arch, slope, params)?;
    Ok((network, Scaler { coordinate_scale: scaler.coordinate_scale, k_scale }))
}

pub fn save_weights(path: &Path, network: &Network, scaler: &Scaler) -> Result<()> {
    write_atomic(path, &encode_weights(network, scaler))
}

pub fn load_weights(path: &Path) -> Result<(Network, Scaler)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(slope: f64) -> Network {
        let arch = Architecture { input: 8, encoder: vec![6, 3], latent: 3, decoder: vec![5] };
        Network::glorot(arch, slope, 1).unwrap()
    }

    #[test]
    fn round_trip() {
        let s = Scaler::new(0.37).unwrap();
        for slope in [0.01, 0.2] {
            let n = net(slope);
            let (back, bs) = decode_weights(&encode_weights(&n, &s)).unwrap();
            assert_eq!(back, n);
            assert_eq!(bs, s);
        }
    }

    #[test]
    fn layout_and_corruption() {
        let bytes = encode_weights(&net(0.01), &Scaler::new(1.0).unwrap());
        assert_eq!(&bytes[..4], b"MBVA");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 6);
        assert!(decode_weights(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_weights(&bad).is_err());
    }
}
