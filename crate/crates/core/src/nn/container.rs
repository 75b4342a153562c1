//! Binary snapshot container for network parameters.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic    b"FMNN"
//! version  u32
//! hlen     u64            length of the JSON header in bytes
//! header   [u8; hlen]     kind, sections, layer dims, activation tags, dropout specs
//! payload  [f64; n]       per section, per layer: weights (row-major) then biases
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layer::{Activation, DenseLayer};
use super::network::{DropoutSpec, NetworkParams};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FMNN";
pub const CONTAINER_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    kind: String,
    sections: Vec<SectionHeader>,
    payload_values: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct SectionHeader {
    name: String,
    layers: Vec<LayerHeader>,
    dropout: DropoutSpec,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerHeader {
    #[serde(rename = "in")]
    in_dim: usize,
    #[serde(rename = "out")]
    out_dim: usize,
    activation: String,
}

/// Encodes named networks under a container `kind`.
pub fn encode_sections(kind: &str, sections: &[(&str, &NetworkParams)]) -> Result<Vec<u8>> {
    let mut payload = Vec::new();
    let mut headers = Vec::with_capacity(sections.len());
    for (name, net) in sections {
        let layers = net
            .layers()
            .iter()
            .map(|l| {
                payload.extend_from_slice(l.weights());
                payload.extend_from_slice(l.biases());
                LayerHeader {
                    in_dim: l.in_dim(),
                    out_dim: l.out_dim(),
                    activation: l.activation().tag().to_string(),
                }
            })
            .collect();
        headers.push(SectionHeader {
            name: (*name).to_string(),
            layers,
            dropout: net.dropout().clone(),
        });
    }
    let header = serde_json::to_vec(&Header {
        kind: kind.to_string(),
        sections: headers,
        payload_values: payload.len(),
    })?;
    let mut out = Vec::with_capacity(16 + header.len() + 8 * payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Decodes a container into its kind and named networks.
pub fn decode_sections(bytes: &[u8]) -> Result<(String, Vec<(String, NetworkParams)>)> {
    let corrupt = |what: &str| Error::Data(format!("network container: {what}"));
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CONTAINER_VERSION {
        return Err(corrupt(&format!("unsupported version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() < hlen {
        return Err(corrupt("truncated header"));
    }
    let header: Header = serde_json::from_slice(&body[..hlen])?;
    let raw = &body[hlen..];
    if raw.len() != header.payload_values * 8 {
        return Err(corrupt("payload length does not match header"));
    }
    let mut values = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut sections = Vec::with_capacity(header.sections.len());
    for section in header.sections {
        let mut layers = Vec::with_capacity(section.layers.len());
        for lh in &section.layers {
            let nw = lh.in_dim * lh.out_dim;
            let weights: Vec<f64> = values.by_ref().take(nw).collect();
            let biases: Vec<f64> = values.by_ref().take(lh.out_dim).collect();
            if weights.len() != nw || biases.len() != lh.out_dim {
                return Err(corrupt("payload shorter than declared layers"));
            }
            layers.push(DenseLayer::new(
                lh.in_dim,
                lh.out_dim,
                weights,
                biases,
                Activation::from_tag(&lh.activation)?,
            )?);
        }
        sections.push((section.name, NetworkParams::new(layers, section.dropout)?));
    }
    if values.next().is_some() {
        return Err(corrupt("payload longer than declared layers"));
    }
    Ok((header.kind, sections))
}

pub fn encode_network(net: &NetworkParams) -> Result<Vec<u8>> {
    encode_sections("network", &[("network", net)])
}

pub fn decode_network(bytes: &[u8]) -> Result<NetworkParams> {
    let (kind, mut sections) = decode_sections(bytes)?;
    if kind != "network" || sections.len() != 1 {
        return Err(Error::Data(format!(
            "expected a single-network container, found kind '{kind}' with {} sections",
            sections.len()
        )));
    }
    Ok(sections.remove(0).1)
}

pub fn write_network(path: &Path, net: &NetworkParams) -> Result<()> {
    std::fs::write(path, encode_network(net)?).map_err(|e| Error::io(path, e))
}

pub fn read_network(path: &Path) -> Result<NetworkParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_network(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            seed in any::<u64>(),
            input in 1usize..6,
            hidden in proptest::collection::vec(1usize..9, 0..3),
            rate in 0.0f64..0.9,
        ) {
            let placement: Vec<usize> = (0..hidden.len()).collect();
            let dropout = DropoutSpec::new(rate, placement, seed ^ 7).unwrap();
            let net = NetworkParams::mlp(input, &hidden, Some((1, Activation::Sigmoid)), dropout, seed).unwrap();
            let bytes = encode_network(&net).unwrap();
            let back = decode_network(&bytes).unwrap();
            prop_assert_eq!(back.dropout().rate.to_bits(), net.dropout().rate.to_bits());
            for (a, b) in net.layers().iter().zip(back.layers()) {
                prop_assert!(a.weights().iter().zip(b.weights()).all(|(x, y)| x.to_bits() == y.to_bits()));
                prop_assert!(a.biases().iter().zip(b.biases()).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
            prop_assert_eq!(&back, &net);
            prop_assert_eq!(encode_network(&back).unwrap(), bytes);
        }
    }

    #[test]
    fn rejects_corruption() {
        let net = NetworkParams::mlp(2, &[3], Some((1, Activation::Sigmoid)), DropoutSpec::none(), 0).unwrap();
        let bytes = encode_network(&net).unwrap();
        assert!(decode_network(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_network(&bad).is_err());
        let mut bad = bytes;
        bad[4] = 9;
        assert!(decode_network(&bad).is_err());
    }
}
