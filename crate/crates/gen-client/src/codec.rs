use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use thiserror::Error;
use trace_model::RoutingTrace;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("base64 decode failed: {0}")]
    Base64(#[from] base64::DecodeError),
    #[error("decoded byte length {got} does not match {n_tokens}x{n_layers}x{slots}x4 = {expected}")]
    ByteLength { expected: usize, got: usize, n_tokens: usize, n_layers: usize, slots: usize },
    #[error("expert ID {id} at flat index {index} out of range [0, {n_experts})")]
    IdOutOfRange { id: i32, index: usize, n_experts: usize },
}

/// Decodes the endpoint's routed-expert metadata: a Base64 string wrapping a
/// little-endian `int32` array laid out token-major (`[token][layer][slot]`).
pub fn decode_routed_experts(
    b64: &str,
    n_tokens: usize,
    n_layers: usize,
    slots: usize,
    n_experts: usize,
) -> Result<RoutingTrace, CodecError> {
    let bytes = BASE64.decode(b64.trim())?;
    let expected = n_tokens * n_layers * slots * 4;
    if bytes.len() != expected {
        return Err(CodecError::ByteLength {
            expected,
            got: bytes.len(),
            n_tokens,
            n_layers,
            slots,
        });
    }
    let mut ids = Vec::with_capacity(n_tokens * n_layers * slots);
    for (index, chunk) in bytes.chunks_exact(4).enumerate() {
        let id = i32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if id < 0 || id as usize >= n_experts {
            return Err(CodecError::IdOutOfRange { id, index, n_experts });
        }
        ids.push(id as u16);
    }
    Ok(RoutingTrace::from_flat(n_tokens, n_layers, slots, ids)
        .expect("length checked against dimensions"))
}

/// Inverse of [`decode_routed_experts`].
pub fn encode_routed_experts(trace: &RoutingTrace) -> String {
    let mut bytes = Vec::with_capacity(trace.flat().len() * 4);
    for &id in trace.flat() {
        bytes.extend_from_slice(&(id as i32).to_le_bytes());
    }
    BASE64.encode(&bytes)
}
