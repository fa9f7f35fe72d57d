//! Fixed-memory inference runtime for the single-head deployment actor.
//!
//! Export format, all integers little-endian:
//!
//! | bytes            | content                                       |
//! |------------------|-----------------------------------------------|
//! | 4                | magic `b"SWGP"`                               |
//! | 2                | `u16` format version                          |
//! | 2                | `u16` hidden size                             |
//! | 2                | `u16` attention heads (always 1)              |
//! | 2                | `u16` layer count L                           |
//! | 4 · L            | per layer `u16` rows, `u16` cols              |
//! | 4 · Σ(r·c + r)   | per layer `f32` weights (row-major), then bias |
//! | 4                | `u32` CRC32 of every preceding byte           |
//!
//! Layers follow the actor tower order: self encoder (2), neighbor encoder (2),
//! obstacle encoder (2), query, key, value, attention output, head (2).
//! The log standard deviation is not exported.
//!
//! Weights are stored as `f32`; arithmetic runs in `f64` over the widened
//! weights, in the same operation order as the reference forward pass.

use crate::error::{Error, Result};
use crate::obs::{RobotObservation, NEIGHBOR_DIM, OBSTACLE_DIM, SELF_DIM};
use crate::policy::{sigmoid, PolicyConfig, PolicyParams, ACTION_DIM};

pub const MAGIC: &[u8; 4] = b"SWGP";
pub const VERSION: u16 = 1;
/// Upper bound on the size of an exported model, bytes.
pub const BYTE_BUDGET: usize = 8192;
pub const N_LAYERS: usize = 12;
const FIXED_HEADER: usize = 12;

/// Expected `(rows, cols)` of every layer for hidden size `h`.
pub fn layer_shapes(h: usize) -> [(usize, usize); N_LAYERS] {
    [
        (h, SELF_DIM),
        (h, h),
        (h, NEIGHBOR_DIM),
        (h, h),
        (h, OBSTACLE_DIM),
        (h, h),
        (h, h),
        (h, h),
        (h, h),
        (h, h),
        (h, 3 * h),
        (ACTION_DIM, h),
    ]
}

/// Serialized size of a model with hidden size `h`.
pub fn exported_size(h: usize) -> usize {
    let floats: usize = layer_shapes(h).iter().map(|(r, c)| r * c + r).sum();
    FIXED_HEADER + 4 * N_LAYERS + 4 * floats + 4
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layer {
    rows: usize,
    cols: usize,
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroModel {
    hidden: usize,
    layers: [Layer; N_LAYERS],
    weights: Vec<f32>,
}

/// Serialize the actor of `params` into the export format.
pub fn export_micro(params: &PolicyParams) -> Result<Vec<u8>> {
    let config = params.config();
    if config.n_heads != 1 {
        return Err(Error::config(
            "policy.n_heads",
            format!("micro export supports a single attention head, got {}", config.n_heads),
        ));
    }
    let h = config.hidden_dim;
    let size = exported_size(h);
    if size > BYTE_BUDGET || h > u16::MAX as usize {
        return Err(Error::Budget {
            size,
            limit: BYTE_BUDGET,
        });
    }
    let mut out = Vec::with_capacity(size);
    out.extend_from_slice(MAGIC);
    for v in [VERSION, h as u16, 1, N_LAYERS as u16] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let slots = params.layout().actor.dense_slots();
    for (_, s) in &slots {
        out.extend_from_slice(&(s.n_out as u16).to_le_bytes());
        out.extend_from_slice(&(s.n_in as u16).to_le_bytes());
    }
    let p = params.as_slice();
    for (_, s) in &slots {
        let (w, b) = s.weights(p);
        for v in w.iter().chain(b) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    debug_assert_eq!(out.len(), size);
    Ok(out)
}

impl MicroModel {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < FIXED_HEADER + 4 || &bytes[..4] != MAGIC {
            return Err(Error::Decode("not a micro model (bad magic)".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        let u16_at = |i: usize| u16::from_le_bytes([body[i], body[i + 1]]) as usize;
        let version = u16_at(4) as u32;
        if version != VERSION as u32 {
            return Err(Error::Version {
                found: version,
                expected: VERSION as u32,
            });
        }
        let (h, heads, n_layers) = (u16_at(6), u16_at(8), u16_at(10));
        if heads != 1 {
            return Err(Error::Dimension(format!("expected 1 attention head, found {heads}")));
        }
        if n_layers != N_LAYERS {
            return Err(Error::Dimension(format!("expected {N_LAYERS} layers, found {n_layers}")));
        }
        if body.len() < FIXED_HEADER + 4 * N_LAYERS {
            return Err(Error::Decode("truncated dimension table".into()));
        }
        let expected = layer_shapes(h);
        let mut layers = [Layer { rows: 0, cols: 0, w: 0, b: 0 }; N_LAYERS];
        let mut cursor = 0;
        for (i, layer) in layers.iter_mut().enumerate() {
            let at = FIXED_HEADER + 4 * i;
            let (rows, cols) = (u16_at(at), u16_at(at + 2));
            if (rows, cols) != expected[i] {
                return Err(Error::Dimension(format!(
                    "layer {i} is {rows}x{cols}, expected {}x{}",
                    expected[i].0, expected[i].1
                )));
            }
            *layer = Layer {
                rows,
                cols,
                w: cursor,
                b: cursor + rows * cols,
            };
            cursor += rows * cols + rows;
        }
        let data = &body[FIXED_HEADER + 4 * N_LAYERS..];
        if data.len() != 4 * cursor {
            return Err(Error::Decode(format!("expected {} weight bytes, found {}", 4 * cursor, data.len())));
        }
        let weights = data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(MicroModel { hidden: h, layers, weights })
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    pub fn param_count(&self) -> usize {
        self.weights.len()
    }

    /// Full-precision policy holding the stored actor weights (critic zeroed).
    pub fn to_reference(&self) -> Result<PolicyParams> {
        let config = PolicyConfig {
            hidden_dim: self.hidden,
            n_heads: 1,
            ..PolicyConfig::deployment()
        };
        let mut params = PolicyParams::zeros(&config)?;
        let slots = params.layout().actor.dense_slots();
        let log_std = params.layout().actor.log_std;
        let p = params.as_mut_slice();
        for ((_, s), l) in slots.iter().zip(&self.layers) {
            for (dst, src) in p[s.w..s.w + s.n_out * s.n_in].iter_mut().zip(&self.weights[l.w..l.b]) {
                *dst = *src as f64;
            }
            for (dst, src) in p[s.b..s.b + s.n_out].iter_mut().zip(&self.weights[l.b..l.b + l.rows]) {
                *dst = *src as f64;
            }
        }
        if let Some(at) = log_std {
            p[at..at + ACTION_DIM].fill(config.log_std_init);
        }
        Ok(params)
    }

    #[inline]
    fn dense(&self, layer: usize, x: &[f64], y: &mut [f64], tanh: bool) {
        let l = self.layers[layer];
        let w = &self.weights[l.w..l.b];
        for (o, y_o) in y.iter_mut().enumerate() {
            let mut acc = self.weights[l.b + o] as f64;
            for (wi, xi) in w[o * l.cols..(o + 1) * l.cols].iter().zip(x) {
                acc += *wi as f64 * xi;
            }
            *y_o = if tanh { acc.tanh() } else { acc };
        }
    }
}

/// Scratch space for [`micro_forward`], sized once from the model.
#[derive(Debug, Clone)]
pub struct MicroWorkspace {
    hidden: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    /// `[e_self, ê_neigh, ê_obst]`, the head input.
    z: Vec<f64>,
    tokens: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    ctx: Vec<f64>,
    out: [f64; ACTION_DIM],
}

impl MicroWorkspace {
    pub fn new(model: &MicroModel) -> Self {
        let h = model.hidden;
        MicroWorkspace {
            hidden: h,
            a: vec![0.0; h],
            b: vec![0.0; h],
            z: vec![0.0; 3 * h],
            tokens: vec![0.0; 2 * h],
            q: vec![0.0; 2 * h],
            k: vec![0.0; 2 * h],
            v: vec![0.0; 2 * h],
            ctx: vec![0.0; 2 * h],
            out: [0.0; ACTION_DIM],
        }
    }

    pub fn footprint_bytes(&self) -> usize {
        let f = std::mem::size_of::<f64>();
        [&self.a, &self.b, &self.z, &self.tokens, &self.q, &self.k, &self.v, &self.ctx]
            .iter()
            .map(|v| v.capacity() * f)
            .sum::<usize>()
            + ACTION_DIM * f
    }
}

/// Squashed action means. Performs no heap allocation on success.
pub fn micro_forward(model: &MicroModel, obs: &RobotObservation, ws: &mut MicroWorkspace) -> Result<[f64; ACTION_DIM]> {
    if ws.hidden != model.hidden {
        return Err(Error::Dimension("workspace was sized for a different model".into()));
    }
    let h = model.hidden;
    let MicroWorkspace {
        a, b, z, tokens, q, k, v, ctx, out, ..
    } = ws;

    model.dense(0, &obs.self_obs, a, true);
    model.dense(1, a, &mut z[..h], true);

    let (e_neigh, e_obst) = tokens.split_at_mut(h);
    e_neigh.fill(0.0);
    let n = obs.neighbor_obs.len();
    if n > 0 {
        for row in &obs.neighbor_obs {
            model.dense(2, row, a, true);
            model.dense(3, a, b, true);
            for (e, x) in e_neigh.iter_mut().zip(b.iter()) {
                *e += x;
            }
        }
        let inv = 1.0 / n as f64;
        e_neigh.iter_mut().for_each(|e| *e *= inv);
    }
    model.dense(4, &obs.obstacle_obs, a, true);
    model.dense(5, a, e_obst, true);

    for (layer, dst) in [(6, &mut *q), (7, &mut *k), (8, &mut *v)] {
        for t in 0..2 {
            model.dense(layer, &tokens[t * h..(t + 1) * h], &mut dst[t * h..(t + 1) * h], false);
        }
    }
    let scale = 1.0 / (h as f64).sqrt();
    for qi in 0..2 {
        let qrow = &q[qi * h..(qi + 1) * h];
        let mut s = [0.0; 2];
        for (ki, sk) in s.iter_mut().enumerate() {
            *sk = qrow.iter().zip(&k[ki * h..(ki + 1) * h]).map(|(x, y)| x * y).sum::<f64>() * scale;
        }
        let m = s[0].max(s[1]);
        let e0 = (s[0] - m).exp();
        let e1 = (s[1] - m).exp();
        let zsum = e0 + e1;
        let (w0, w1) = (e0 / zsum, e1 / zsum);
        for col in 0..h {
            ctx[qi * h + col] = w0 * v[col] + w1 * v[h + col];
        }
    }
    for t in 0..2 {
        let dst = &mut z[(t + 1) * h..(t + 2) * h];
        model.dense(9, &ctx[t * h..(t + 1) * h], dst, false);
        for (o, x) in dst.iter_mut().zip(&tokens[t * h..(t + 1) * h]) {
            *o += x;
        }
    }
    model.dense(10, z, a, true);
    model.dense(11, a, out, false);
    Ok(out.map(sigmoid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn deployment(seed: u64) -> PolicyParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = PolicyParams::init(&PolicyConfig::deployment(), &mut rng).unwrap();
        for v in p.as_mut_slice() {
            *v += rng.gen_range(-0.3..0.3);
        }
        p
    }

    fn obs(rng: &mut ChaCha8Rng, k: usize) -> RobotObservation {
        RobotObservation {
            self_obs: std::array::from_fn(|_| rng.gen_range(-2.0..2.0)),
            neighbor_obs: (0..k).map(|_| std::array::from_fn(|_| rng.gen_range(-2.0..2.0))).collect(),
            obstacle_obs: std::array::from_fn(|_| rng.gen_range(0.0..2.0)),
        }
    }

    #[test]
    fn deployment_export_fits_budget() {
        let bytes = export_micro(&deployment(0)).unwrap();
        assert_eq!(bytes.len(), exported_size(10));
        assert!(bytes.len() <= BYTE_BUDGET);
        assert_eq!(&bytes[..4], b"SWGP");
        let m = MicroModel::from_bytes(&bytes).unwrap();
        assert_eq!(m.param_count(), PolicyConfig::deployment().inference_param_count());
    }

    #[test]
    fn multi_head_rejected() {
        let c = PolicyConfig {
            hidden_dim: 10,
            n_heads: 2,
            ..PolicyConfig::deployment()
        };
        let p = PolicyParams::zeros(&c).unwrap();
        assert!(matches!(export_micro(&p), Err(Error::Config { .. })));
    }

    #[test]
    fn oversized_rejected_with_budget_error() {
        let c = PolicyConfig {
            hidden_dim: 32,
            n_heads: 1,
            ..PolicyConfig::deployment()
        };
        let p = PolicyParams::zeros(&c).unwrap();
        assert!(matches!(export_micro(&p), Err(Error::Budget { limit: BYTE_BUDGET, .. })));
    }

    #[test]
    fn matches_reference_on_stored_weights() {
        let p = deployment(1);
        let m = MicroModel::from_bytes(&export_micro(&p).unwrap()).unwrap();
        let reference = m.to_reference().unwrap();
        let mut ws = MicroWorkspace::new(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for i in 0..200 {
            let o = obs(&mut rng, i % 4);
            let got = micro_forward(&m, &o, &mut ws).unwrap();
            let want = reference.forward(&o).unwrap().action_mean;
            assert_eq!(got, want);
        }
    }

    #[test]
    fn repeated_calls_are_bitwise_identical() {
        let m = MicroModel::from_bytes(&export_micro(&deployment(3)).unwrap()).unwrap();
        let mut ws = MicroWorkspace::new(&m);
        let o = obs(&mut ChaCha8Rng::seed_from_u64(4), 2);
        let a = micro_forward(&m, &o, &mut ws).unwrap();
        let bytes = ws.footprint_bytes();
        for _ in 0..10 {
            assert_eq!(micro_forward(&m, &o, &mut ws).unwrap().map(f64::to_bits), a.map(f64::to_bits));
        }
        assert_eq!(ws.footprint_bytes(), bytes);
    }

    #[test]
    fn corruption_detected() {
        let bytes = export_micro(&deployment(5)).unwrap();
        for at in 0..bytes.len() {
            let mut bad = bytes.clone();
            bad[at] ^= 0x01;
            assert!(MicroModel::from_bytes(&bad).is_err(), "byte {at}");
        }
    }

    #[test]
    fn dimension_table_checked() {
        let mut bytes = export_micro(&deployment(6)).unwrap();
        // Claim a 9-input obstacle layer has 8 inputs, then re-seal the checksum.
        let at = FIXED_HEADER + 4 * 4 + 2;
        bytes[at] = 8;
        let n = bytes.len();
        let crc = crc32fast::hash(&bytes[..n - 4]);
        bytes[n - 4..].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(MicroModel::from_bytes(&bytes), Err(Error::Dimension(_))));
    }
}
