//! Parameter file: `OBRW-NN1\n`, the spec as one canonical JSON line, an
//! optional extra JSON line (agent checkpoints), then the parameters as
//! little-endian `f64` in layer order.

use std::path::Path;

use super::{NetworkSpec, ParameterSet};
use crate::error::{Error, Result};
use crate::io::{put_f64s, put_json_line, read_file, write_atomic, ByteReader};

pub const MAGIC: &[u8] = b"OBRW-NN1\n";

pub fn encode(spec: &NetworkSpec, params: &ParameterSet, extra: Option<&serde_json::Value>) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + params.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(spec.canonical_json().as_bytes());
    out.push(b'\n');
    if let Some(extra) = extra {
        put_json_line(&mut out, extra);
    }
    put_f64s(&mut out, params.as_slice());
    out
}

/// Decodes a file written by [`encode`]. `with_extra` must match how it was written.
pub fn decode(bytes: &[u8], with_extra: bool) -> Result<(NetworkSpec, ParameterSet, Option<serde_json::Value>)> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(MAGIC)?;
    let at = r.offset();
    let spec: NetworkSpec = r.json_line()?;
    spec.validate().map_err(|e| Error::format(at, e.to_string()))?;
    let extra = if with_extra { Some(r.json_line()?) } else { None };
    let at = r.offset();
    let values = r.f64s(spec.parameter_count())?;
    r.expect_end()?;
    let params = ParameterSet::from_values(&spec, values).map_err(|e| Error::format(at, e.to_string()))?;
    Ok((spec, params, extra))
}

pub fn save(path: &Path, spec: &NetworkSpec, params: &ParameterSet) -> Result<()> {
    write_atomic(path, &encode(spec, params, None))
}

pub fn load(path: &Path) -> Result<(NetworkSpec, ParameterSet)> {
    let (spec, params, _) = decode(&read_file(path)?, false)?;
    Ok((spec, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Activation, LayerSpec};
    use proptest::prelude::*;

    fn spec() -> NetworkSpec {
        NetworkSpec::new(vec![LayerSpec::gru(2, 2), LayerSpec::dense(2, 1, Activation::Identity)]).unwrap()
    }

    proptest! {
        #[test]
        fn round_trips_bit_exactly(values in proptest::collection::vec(-1e300f64..1e300, 39)) {
            let s = spec();
            prop_assume!(values.len() == s.parameter_count());
            let p = ParameterSet::from_values(&s, values).unwrap();
            let bytes = encode(&s, &p, None);
            let (s2, p2, _) = decode(&bytes, false).unwrap();
            prop_assert_eq!(s2, s);
            let same = p2.as_slice().iter().zip(p.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same);
        }
    }

    #[test]
    fn rejects_wrong_magic_and_truncation() {
        let s = spec();
        let p = ParameterSet::zeros(&s);
        let mut bytes = encode(&s, &p, None);
        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(decode(truncated, false), Err(Error::Format { .. })));
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes, false), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn extra_line_round_trips() {
        let s = spec();
        let p = ParameterSet::zeros(&s);
        let extra = serde_json::json!({"algorithm": "ddpg", "config_hash": "ab"});
        let (_, _, e) = decode(&encode(&s, &p, Some(&extra)), true).unwrap();
        assert_eq!(e.unwrap(), extra);
    }
}
