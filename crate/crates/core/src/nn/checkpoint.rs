//! Network checkpoints: a versioned binary header, the layer specs, and the
//! flat parameter vector as little-endian IEEE-754 f64.
//!
//! A file holds one or more networks, so composite models (trunk plus heads)
//! round-trip through a single checkpoint.

use std::path::Path;

use super::layers::LayerSpec;
use super::{Network, NetworkSpec};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"PGNN";
const VERSION: u32 = 1;

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn save_networks(path: &Path, nets: &[&Network]) -> Result<()> {
    let bytes = encode_networks(nets);
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_networks(path: &Path) -> Result<Vec<Network>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_networks(&bytes).map_err(|msg| Error::format(path, msg))
}

pub fn encode_networks(nets: &[&Network]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    push_u32(&mut out, VERSION);
    push_u32(&mut out, nets.len() as u32);
    for net in nets {
        encode_network(net, &mut out);
    }
    out
}

fn encode_network(net: &Network, out: &mut Vec<u8>) {
    let spec = net.spec();
    push_u32(out, spec.input_shape.len() as u32);
    for &d in &spec.input_shape {
        push_u32(out, d as u32);
    }
    out.extend_from_slice(&spec.init_seed.to_le_bytes());
    push_u32(out, spec.layers.len() as u32);
    for layer in &spec.layers {
        encode_layer_spec(layer, out);
    }
    let params = net.params_flat();
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
}

fn encode_layer_spec(spec: &LayerSpec, out: &mut Vec<u8>) {
    match *spec {
        LayerSpec::Conv { in_ch, out_ch, kernel, stride, padding } => {
            push_u32(out, 1);
            for v in [in_ch, out_ch, kernel, stride, padding] {
                push_u32(out, v as u32);
            }
        }
        LayerSpec::ConvTranspose { in_ch, out_ch, kernel, stride, padding } => {
            push_u32(out, 2);
            for v in [in_ch, out_ch, kernel, stride, padding] {
                push_u32(out, v as u32);
            }
        }
        LayerSpec::Relu => push_u32(out, 3),
        LayerSpec::MaxPool { size } => {
            push_u32(out, 4);
            push_u32(out, size as u32);
        }
        LayerSpec::AvgPool { size } => {
            push_u32(out, 5);
            push_u32(out, size as u32);
        }
        LayerSpec::Flatten => push_u32(out, 6),
        LayerSpec::Dense { in_dim, out_dim } => {
            push_u32(out, 7);
            push_u32(out, in_dim as u32);
            push_u32(out, out_dim as u32);
        }
        LayerSpec::Residual { channels } => {
            push_u32(out, 8);
            push_u32(out, channels as u32);
        }
    }
}

pub fn decode_networks(bytes: &[u8]) -> std::result::Result<Vec<Network>, String> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err("bad magic; not a network checkpoint".into());
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let count = cur.u32()? as usize;
    let mut nets = Vec::with_capacity(count);
    for _ in 0..count {
        nets.push(decode_network(&mut cur)?);
    }
    if cur.pos != bytes.len() {
        return Err("trailing bytes after last network".into());
    }
    Ok(nets)
}

fn decode_network(cur: &mut Cursor<'_>) -> std::result::Result<Network, String> {
    let rank = cur.u32()? as usize;
    let mut input_shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        input_shape.push(cur.u32()? as usize);
    }
    let init_seed = cur.u64()?;
    let layer_count = cur.u32()? as usize;
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        layers.push(decode_layer_spec(cur)?);
    }
    let spec = NetworkSpec { input_shape, layers, init_seed };
    let mut net = Network::build(&spec).map_err(|e| e.to_string())?;
    let param_count = cur.u64()? as usize;
    if param_count != net.param_count() {
        return Err(format!(
            "checkpoint stores {param_count} parameters but the spec needs {}",
            net.param_count()
        ));
    }
    let mut params = Vec::with_capacity(param_count);
    for _ in 0..param_count {
        params.push(cur.f64()?);
    }
    net.set_params_flat(&params).map_err(|e| e.to_string())?;
    Ok(net)
}

fn decode_layer_spec(cur: &mut Cursor<'_>) -> std::result::Result<LayerSpec, String> {
    let tag = cur.u32()?;
    Ok(match tag {
        1 | 2 => {
            let in_ch = cur.u32()? as usize;
            let out_ch = cur.u32()? as usize;
            let kernel = cur.u32()? as usize;
            let stride = cur.u32()? as usize;
            let padding = cur.u32()? as usize;
            if tag == 1 {
                LayerSpec::Conv { in_ch, out_ch, kernel, stride, padding }
            } else {
                LayerSpec::ConvTranspose { in_ch, out_ch, kernel, stride, padding }
            }
        }
        3 => LayerSpec::Relu,
        4 => LayerSpec::MaxPool { size: cur.u32()? as usize },
        5 => LayerSpec::AvgPool { size: cur.u32()? as usize },
        6 => LayerSpec::Flatten,
        7 => LayerSpec::Dense { in_dim: cur.u32()? as usize, out_dim: cur.u32()? as usize },
        8 => LayerSpec::Residual { channels: cur.u32()? as usize },
        other => return Err(format!("unknown layer tag {other}")),
    })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        if self.pos + n > self.bytes.len() {
            return Err("checkpoint truncated".into());
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_net(seed: u64) -> Network {
        Network::build(&NetworkSpec {
            input_shape: vec![2, 6, 6],
            layers: vec![
                LayerSpec::Conv { in_ch: 2, out_ch: 3, kernel: 3, stride: 1, padding: 1 },
                LayerSpec::Relu,
                LayerSpec::Residual { channels: 3 },
                LayerSpec::MaxPool { size: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { in_dim: 27, out_dim: 2 },
            ],
            init_seed: seed,
        })
        .unwrap()
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let net = small_net(9);
        let bytes = encode_networks(&[&net]);
        let loaded = decode_networks(&bytes).unwrap();
        assert_eq!(loaded.len(), 1);
        assert_eq!(loaded[0], net);
        // Re-encoding reproduces the same bytes.
        assert_eq!(encode_networks(&[&loaded[0]]), bytes);
    }

    #[test]
    fn multi_network_checkpoints_keep_order() {
        let a = small_net(1);
        let b = small_net(2);
        let bytes = encode_networks(&[&a, &b]);
        let loaded = decode_networks(&bytes).unwrap();
        assert_eq!(loaded[0], a);
        assert_eq!(loaded[1], b);
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let net = small_net(3);
        let mut bytes = encode_networks(&[&net]);
        bytes[0] = b'X';
        assert!(decode_networks(&bytes).is_err());
    }
}
