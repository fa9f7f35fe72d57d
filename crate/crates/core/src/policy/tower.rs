//! One encoder–attention–head stack. The actor and the critic are each a tower.

use super::kernels::{dense, dense_backward, dense_tanh, tanh_backward};
use crate::obs::{RobotObservation, NEIGHBOR_DIM, OBSTACLE_DIM, SELF_DIM};

/// Location of one dense layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseSlot {
    pub w: usize,
    pub b: usize,
    pub n_out: usize,
    pub n_in: usize,
}

impl DenseSlot {
    pub fn len(&self) -> usize {
        self.n_out * self.n_in + self.n_out
    }

    #[inline]
    pub fn weights<'a>(&self, p: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        (&p[self.w..self.w + self.n_out * self.n_in], &p[self.b..self.b + self.n_out])
    }

    #[inline]
    pub fn grads<'a>(&self, g: &'a mut [f64]) -> (&'a mut [f64], &'a mut [f64]) {
        let (head, tail) = g.split_at_mut(self.b);
        (&mut head[self.w..self.w + self.n_out * self.n_in], &mut tail[..self.n_out])
    }
}

/// Parameter offsets for one tower.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TowerLayout {
    pub hidden: usize,
    pub n_heads: usize,
    pub out_dim: usize,
    pub self1: DenseSlot,
    pub self2: DenseSlot,
    pub neigh1: DenseSlot,
    pub neigh2: DenseSlot,
    pub obst1: DenseSlot,
    pub obst2: DenseSlot,
    pub query: DenseSlot,
    pub key: DenseSlot,
    pub value: DenseSlot,
    pub proj: DenseSlot,
    pub head1: DenseSlot,
    pub head2: DenseSlot,
    /// State-independent log standard deviation (actor only).
    pub log_std: Option<usize>,
    pub start: usize,
    pub end: usize,
}

impl TowerLayout {
    /// Lay out a tower starting at `offset`. Each dense layer stores weights then bias.
    pub fn new(offset: usize, hidden: usize, n_heads: usize, out_dim: usize, with_log_std: bool) -> Self {
        let mut cursor = offset;
        let mut slot = |n_out: usize, n_in: usize| {
            let s = DenseSlot {
                w: cursor,
                b: cursor + n_out * n_in,
                n_out,
                n_in,
            };
            cursor += s.len();
            s
        };
        let h = hidden;
        let self1 = slot(h, SELF_DIM);
        let self2 = slot(h, h);
        let neigh1 = slot(h, NEIGHBOR_DIM);
        let neigh2 = slot(h, h);
        let obst1 = slot(h, OBSTACLE_DIM);
        let obst2 = slot(h, h);
        let query = slot(h, h);
        let key = slot(h, h);
        let value = slot(h, h);
        let proj = slot(h, h);
        let head1 = slot(h, 3 * h);
        let head2 = slot(out_dim, h);
        let log_std = with_log_std.then(|| {
            let at = cursor;
            cursor += out_dim;
            at
        });
        TowerLayout {
            hidden,
            n_heads,
            out_dim,
            self1,
            self2,
            neigh1,
            neigh2,
            obst1,
            obst2,
            query,
            key,
            value,
            proj,
            head1,
            head2,
            log_std,
            start: offset,
            end: cursor,
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    /// Named dense layers in storage order.
    pub fn dense_slots(&self) -> [(&'static str, DenseSlot); 12] {
        [
            ("self_encoder.0", self.self1),
            ("self_encoder.1", self.self2),
            ("neighbor_encoder.0", self.neigh1),
            ("neighbor_encoder.1", self.neigh2),
            ("obstacle_encoder.0", self.obst1),
            ("obstacle_encoder.1", self.obst2),
            ("attention.query", self.query),
            ("attention.key", self.key),
            ("attention.value", self.value),
            ("attention.output", self.proj),
            ("head.0", self.head1),
            ("head.1", self.head2),
        ]
    }
}

/// Activations of one tower forward pass, kept for the backward pass, plus
/// backward scratch. Sized from the hidden width, head count and neighbor count.
#[derive(Debug, Clone)]
pub struct TowerCache {
    h: usize,
    n_heads: usize,
    k: usize,
    pub(crate) x_self: [f64; SELF_DIM],
    pub(crate) self1: Vec<f64>,
    pub(crate) e_self: Vec<f64>,
    pub(crate) x_neigh: Vec<[f64; NEIGHBOR_DIM]>,
    pub(crate) neigh1: Vec<f64>,
    pub(crate) neigh2: Vec<f64>,
    pub(crate) x_obst: [f64; OBSTACLE_DIM],
    pub(crate) obst1: Vec<f64>,
    /// Token matrix `[e_neigh; e_obst]`, 2 × h.
    pub(crate) tokens: Vec<f64>,
    pub(crate) q: Vec<f64>,
    pub(crate) kk: Vec<f64>,
    pub(crate) v: Vec<f64>,
    /// Per head, row-major 2 × 2.
    pub(crate) attn: Vec<f64>,
    pub(crate) ctx: Vec<f64>,
    /// Residual output `[ê_neigh; ê_obst]`.
    pub(crate) fused: Vec<f64>,
    pub(crate) z: Vec<f64>,
    pub(crate) head1: Vec<f64>,
    pub(crate) out: Vec<f64>,
    grad: GradScratch,
}

#[derive(Debug, Clone)]
struct GradScratch {
    d_head1: Vec<f64>,
    d_z: Vec<f64>,
    d_fused: Vec<f64>,
    d_ctx: Vec<f64>,
    d_q: Vec<f64>,
    d_k: Vec<f64>,
    d_v: Vec<f64>,
    d_tokens: Vec<f64>,
    d_a: Vec<f64>,
    d_b: Vec<f64>,
}

impl TowerCache {
    pub fn new(h: usize, n_heads: usize, out_dim: usize, k: usize) -> Self {
        TowerCache {
            h,
            n_heads,
            k,
            x_self: [0.0; SELF_DIM],
            self1: vec![0.0; h],
            e_self: vec![0.0; h],
            x_neigh: vec![[0.0; NEIGHBOR_DIM]; k],
            neigh1: vec![0.0; k * h],
            neigh2: vec![0.0; k * h],
            x_obst: [0.0; OBSTACLE_DIM],
            obst1: vec![0.0; h],
            tokens: vec![0.0; 2 * h],
            q: vec![0.0; 2 * h],
            kk: vec![0.0; 2 * h],
            v: vec![0.0; 2 * h],
            attn: vec![0.0; 4 * n_heads],
            ctx: vec![0.0; 2 * h],
            fused: vec![0.0; 2 * h],
            z: vec![0.0; 3 * h],
            head1: vec![0.0; h],
            out: vec![0.0; out_dim],
            grad: GradScratch {
                d_head1: vec![0.0; h],
                d_z: vec![0.0; 3 * h],
                d_fused: vec![0.0; 2 * h],
                d_ctx: vec![0.0; 2 * h],
                d_q: vec![0.0; 2 * h],
                d_k: vec![0.0; 2 * h],
                d_v: vec![0.0; 2 * h],
                d_tokens: vec![0.0; 2 * h],
                d_a: vec![0.0; h],
                d_b: vec![0.0; h],
            },
        }
    }

    pub fn neighbor_capacity(&self) -> usize {
        self.k
    }

    fn ensure_neighbors(&mut self, k: usize) {
        if k != self.k {
            self.k = k;
            self.x_neigh.resize(k, [0.0; NEIGHBOR_DIM]);
            self.neigh1.resize(k * self.h, 0.0);
            self.neigh2.resize(k * self.h, 0.0);
        }
    }

    /// Total bytes held by this cache.
    pub fn footprint_bytes(&self) -> usize {
        let f = std::mem::size_of::<f64>();
        let vecs = [
            &self.self1,
            &self.e_self,
            &self.neigh1,
            &self.neigh2,
            &self.obst1,
            &self.tokens,
            &self.q,
            &self.kk,
            &self.v,
            &self.attn,
            &self.ctx,
            &self.fused,
            &self.z,
            &self.head1,
            &self.out,
            &self.grad.d_head1,
            &self.grad.d_z,
            &self.grad.d_fused,
            &self.grad.d_ctx,
            &self.grad.d_q,
            &self.grad.d_k,
            &self.grad.d_v,
            &self.grad.d_tokens,
            &self.grad.d_a,
            &self.grad.d_b,
        ];
        vecs.iter().map(|v| v.capacity() * f).sum::<usize>()
            + self.x_neigh.capacity() * NEIGHBOR_DIM * f
            + (SELF_DIM + OBSTACLE_DIM) * f
    }

    pub fn e_self(&self) -> &[f64] {
        &self.e_self
    }

    pub fn e_neigh(&self) -> &[f64] {
        &self.tokens[..self.h]
    }

    pub fn e_obst(&self) -> &[f64] {
        &self.tokens[self.h..]
    }

    pub fn attended_neigh(&self) -> &[f64] {
        &self.fused[..self.h]
    }

    pub fn attended_obst(&self) -> &[f64] {
        &self.fused[self.h..]
    }

    /// Attention weights of head `head`, row-major 2 × 2 (query token × key token).
    pub fn attention_weights(&self, head: usize) -> &[f64] {
        &self.attn[4 * head..4 * head + 4]
    }

    pub fn output(&self) -> &[f64] {
        &self.out
    }

    pub fn n_heads(&self) -> usize {
        self.n_heads
    }
}

/// Encoders only: fill `e_self`, the pooled neighbor embedding and the obstacle embedding.
pub fn encode(layout: &TowerLayout, p: &[f64], obs: &RobotObservation, c: &mut TowerCache) {
    let h = layout.hidden;
    c.ensure_neighbors(obs.neighbor_obs.len());
    c.x_self = obs.self_obs;
    c.x_obst = obs.obstacle_obs;
    c.x_neigh.copy_from_slice(&obs.neighbor_obs);

    let (w, b) = layout.self1.weights(p);
    dense_tanh(w, b, &c.x_self, &mut c.self1);
    let (w, b) = layout.self2.weights(p);
    dense_tanh(w, b, &c.self1, &mut c.e_self);

    let (e_neigh, e_obst) = c.tokens.split_at_mut(h);
    e_neigh.fill(0.0);
    let k = c.x_neigh.len();
    if k > 0 {
        let (w1, b1) = layout.neigh1.weights(p);
        let (w2, b2) = layout.neigh2.weights(p);
        for j in 0..k {
            let a1 = &mut c.neigh1[j * h..(j + 1) * h];
            dense_tanh(w1, b1, &c.x_neigh[j], a1);
            let a2 = &mut c.neigh2[j * h..(j + 1) * h];
            dense_tanh(w2, b2, a1, a2);
            for (e, a) in e_neigh.iter_mut().zip(a2.iter()) {
                *e += a;
            }
        }
        let inv = 1.0 / k as f64;
        e_neigh.iter_mut().for_each(|e| *e *= inv);
    }

    let (w, b) = layout.obst1.weights(p);
    dense_tanh(w, b, &c.x_obst, &mut c.obst1);
    let (w, b) = layout.obst2.weights(p);
    dense_tanh(w, b, &c.obst1, e_obst);
}

/// Multi-head attention over the two tokens in `c.tokens`, with output projection
/// and residual connection, written to `c.fused`.
pub fn attend(layout: &TowerLayout, p: &[f64], c: &mut TowerCache) {
    let h = layout.hidden;
    let nh = layout.n_heads;
    let d = h / nh;
    let scale = 1.0 / (d as f64).sqrt();

    for (slot, dst) in [(layout.query, &mut c.q), (layout.key, &mut c.kk), (layout.value, &mut c.v)] {
        let (w, b) = slot.weights(p);
        for t in 0..2 {
            dense(w, b, &c.tokens[t * h..(t + 1) * h], &mut dst[t * h..(t + 1) * h]);
        }
    }

    for head in 0..nh {
        let cols = head * d..(head + 1) * d;
        let a = &mut c.attn[4 * head..4 * head + 4];
        for qi in 0..2 {
            let qrow = &c.q[qi * h..][cols.clone()];
            let mut s = [0.0; 2];
            for (ki, sk) in s.iter_mut().enumerate() {
                let krow = &c.kk[ki * h..][cols.clone()];
                *sk = qrow.iter().zip(krow).map(|(x, y)| x * y).sum::<f64>() * scale;
            }
            let m = s[0].max(s[1]);
            let e0 = (s[0] - m).exp();
            let e1 = (s[1] - m).exp();
            let z = e0 + e1;
            a[2 * qi] = e0 / z;
            a[2 * qi + 1] = e1 / z;
        }
        for qi in 0..2 {
            for col in cols.clone() {
                c.ctx[qi * h + col] = a[2 * qi] * c.v[col] + a[2 * qi + 1] * c.v[h + col];
            }
        }
    }

    let (w, b) = layout.proj.weights(p);
    for t in 0..2 {
        let out = &mut c.fused[t * h..(t + 1) * h];
        dense(w, b, &c.ctx[t * h..(t + 1) * h], out);
        for (o, x) in out.iter_mut().zip(&c.tokens[t * h..(t + 1) * h]) {
            *o += x;
        }
    }
}

/// Full tower forward; the result is left in `c.out`.
pub fn forward(layout: &TowerLayout, p: &[f64], obs: &RobotObservation, c: &mut TowerCache) {
    let h = layout.hidden;
    encode(layout, p, obs, c);
    attend(layout, p, c);
    c.z[..h].copy_from_slice(&c.e_self);
    c.z[h..].copy_from_slice(&c.fused);
    let (w, b) = layout.head1.weights(p);
    dense_tanh(w, b, &c.z, &mut c.head1);
    let (w, b) = layout.head2.weights(p);
    dense(w, b, &c.head1, &mut c.out);
}

/// Reverse pass for the last `forward` held in `c`, accumulating into `g`
/// (same indexing as the parameter vector).
pub fn backward(layout: &TowerLayout, p: &[f64], c: &mut TowerCache, d_out: &[f64], g: &mut [f64]) {
    let h = layout.hidden;
    let nh = layout.n_heads;
    let d = h / nh;
    let scale = 1.0 / (d as f64).sqrt();
    let s = &mut c.grad;

    // Head.
    s.d_head1.fill(0.0);
    let (w, _) = layout.head2.weights(p);
    let (dw, db) = layout.head2.grads(g);
    dense_backward(w, &c.head1, d_out, dw, db, Some(&mut s.d_head1));
    tanh_backward(&c.head1, &mut s.d_head1);
    s.d_z.fill(0.0);
    let (w, _) = layout.head1.weights(p);
    let (dw, db) = layout.head1.grads(g);
    dense_backward(w, &c.z, &s.d_head1, dw, db, Some(&mut s.d_z));

    // Attention with residual.
    s.d_fused.copy_from_slice(&s.d_z[h..]);
    s.d_tokens.copy_from_slice(&s.d_fused);
    s.d_ctx.fill(0.0);
    let (w, _) = layout.proj.weights(p);
    for t in 0..2 {
        let (dw, db) = layout.proj.grads(g);
        dense_backward(
            w,
            &c.ctx[t * h..(t + 1) * h],
            &s.d_fused[t * h..(t + 1) * h],
            dw,
            db,
            Some(&mut s.d_ctx[t * h..(t + 1) * h]),
        );
    }
    s.d_q.fill(0.0);
    s.d_k.fill(0.0);
    s.d_v.fill(0.0);
    for head in 0..nh {
        let cols = head * d..(head + 1) * d;
        let a = &c.attn[4 * head..4 * head + 4];
        let mut d_scores = [0.0; 4];
        for qi in 0..2 {
            let mut da = [0.0; 2];
            for (ki, dak) in da.iter_mut().enumerate() {
                *dak = cols
                    .clone()
                    .map(|col| s.d_ctx[qi * h + col] * c.v[ki * h + col])
                    .sum::<f64>();
                for col in cols.clone() {
                    s.d_v[ki * h + col] += a[2 * qi + ki] * s.d_ctx[qi * h + col];
                }
            }
            let dot = a[2 * qi] * da[0] + a[2 * qi + 1] * da[1];
            d_scores[2 * qi] = a[2 * qi] * (da[0] - dot) * scale;
            d_scores[2 * qi + 1] = a[2 * qi + 1] * (da[1] - dot) * scale;
        }
        for qi in 0..2 {
            for ki in 0..2 {
                let ds = d_scores[2 * qi + ki];
                for col in cols.clone() {
                    s.d_q[qi * h + col] += ds * c.kk[ki * h + col];
                    s.d_k[ki * h + col] += ds * c.q[qi * h + col];
                }
            }
        }
    }
    for (slot, dy) in [(layout.query, &s.d_q), (layout.key, &s.d_k), (layout.value, &s.d_v)] {
        let (w, _) = slot.weights(p);
        for t in 0..2 {
            let (dw, db) = slot.grads(g);
            dense_backward(
                w,
                &c.tokens[t * h..(t + 1) * h],
                &dy[t * h..(t + 1) * h],
                dw,
                db,
                Some(&mut s.d_tokens[t * h..(t + 1) * h]),
            );
        }
    }

    // Self encoder.
    s.d_a.copy_from_slice(&s.d_z[..h]);
    tanh_backward(&c.e_self, &mut s.d_a);
    s.d_b.fill(0.0);
    let (w, _) = layout.self2.weights(p);
    let (dw, db) = layout.self2.grads(g);
    dense_backward(w, &c.self1, &s.d_a, dw, db, Some(&mut s.d_b));
    tanh_backward(&c.self1, &mut s.d_b);
    let (dw, db) = layout.self1.grads(g);
    dense_backward(&[], &c.x_self, &s.d_b, dw, db, None);

    // Obstacle encoder.
    s.d_a.copy_from_slice(&s.d_tokens[h..]);
    tanh_backward(&c.tokens[h..], &mut s.d_a);
    s.d_b.fill(0.0);
    let (w, _) = layout.obst2.weights(p);
    let (dw, db) = layout.obst2.grads(g);
    dense_backward(w, &c.obst1, &s.d_a, dw, db, Some(&mut s.d_b));
    tanh_backward(&c.obst1, &mut s.d_b);
    let (dw, db) = layout.obst1.grads(g);
    dense_backward(&[], &c.x_obst, &s.d_b, dw, db, None);

    // Neighbor encoder, through the mean pool.
    let k = c.x_neigh.len();
    if k > 0 {
        let inv = 1.0 / k as f64;
        let (w2, _) = layout.neigh2.weights(p);
        for j in 0..k {
            let a2 = &c.neigh2[j * h..(j + 1) * h];
            let a1 = &c.neigh1[j * h..(j + 1) * h];
            for ((da, dt), a) in s.d_a.iter_mut().zip(&s.d_tokens[..h]).zip(a2) {
                *da = dt * inv * (1.0 - a * a);
            }
            s.d_b.fill(0.0);
            let (dw, db) = layout.neigh2.grads(g);
            dense_backward(w2, a1, &s.d_a, dw, db, Some(&mut s.d_b));
            tanh_backward(a1, &mut s.d_b);
            let (dw, db) = layout.neigh1.grads(g);
            dense_backward(&[], &c.x_neigh[j], &s.d_b, dw, db, None);
        }
    }
}
