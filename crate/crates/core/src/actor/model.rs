//! Forward and reverse pass of the decoder-only generator.
//!
//! Input rows are the generated nodes in BFS order followed by one query row
//! for the slot being predicted. Each decoder block applies a pre-norm
//! frequency attention (DCT, keep the lowest `M` rows, attend, zero-pad,
//! inverse DCT) and a pre-norm ReLU feed-forward, both with residuals. Only
//! the query row is needed after the last block, so the final feed-forward
//! runs on that row alone.

use super::dct::{freq_attention, Attention, DctBank};
use super::mat::{dot, Mat};
use super::params::{ModelConfig, ParamLayout};
use crate::error::{Error, Result};
use crate::expr::position::dpe_encode_into;
use crate::expr::tree::{Position, TreeBuilder};

const LN_EPS: f64 = 1e-5;

/// What the model conditions on for one prediction.
#[derive(Debug, Clone, Copy)]
pub struct Context<'a> {
    pub tokens: &'a [usize],
    pub positions: &'a [Position],
    pub query: Position,
}

#[derive(Debug, Clone)]
struct LnCache {
    xhat: Mat,
    inv_std: Vec<f64>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    ln1: LnCache,
    z: Mat,
    att: Attention,
    /// First sequence row carried through the feed-forward half.
    start: usize,
    ln2: LnCache,
    w: Mat,
    pre: Mat,
}

/// Logits plus everything the reverse pass needs.
#[derive(Debug, Clone)]
pub struct Forward {
    pub logits: Vec<f64>,
    rows: Vec<usize>,
    layers: Vec<LayerCache>,
    lnf: LnCache,
    zf: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Actor {
    config: ModelConfig,
    layout: ParamLayout,
    dct: DctBank,
}

fn layer_norm(x: &Mat, gain: &[f64], bias: &[f64]) -> (Mat, LnCache) {
    let r = x.cols;
    let mut out = Mat::zeros(x.rows, r);
    let mut xhat = Mat::zeros(x.rows, r);
    let mut inv_std = Vec::with_capacity(x.rows);
    for i in 0..x.rows {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / r as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / r as f64;
        let is = 1.0 / (var + LN_EPS).sqrt();
        inv_std.push(is);
        for j in 0..r {
            let h = (row[j] - mean) * is;
            xhat.set(i, j, h);
            out.set(i, j, gain[j] * h + bias[j]);
        }
    }
    (out, LnCache { xhat, inv_std })
}

/// Returns `dx` and accumulates gain/bias gradients.
fn layer_norm_backward(dy: &Mat, cache: &LnCache, gain: &[f64], dgain: &mut [f64], dbias: &mut [f64]) -> Mat {
    let r = dy.cols;
    let mut dx = Mat::zeros(dy.rows, r);
    let mut dxhat = vec![0.0; r];
    for i in 0..dy.rows {
        let g = dy.row(i);
        let xh = cache.xhat.row(i);
        for j in 0..r {
            dgain[j] += g[j] * xh[j];
            dbias[j] += g[j];
            dxhat[j] = g[j] * gain[j];
        }
        let mean_d = dxhat.iter().sum::<f64>() / r as f64;
        let mean_dx = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / r as f64;
        let is = cache.inv_std[i];
        for (j, out) in dx.row_mut(i).iter_mut().enumerate() {
            *out = is * (dxhat[j] - mean_d - xh[j] * mean_dx);
        }
    }
    dx
}

/// `x (n x a) * w (a x b)` with `w` a row-major slice.
fn mul_slice(x: &Mat, w: &[f64], b: usize) -> Mat {
    let mut out = Mat::zeros(x.rows, b);
    for i in 0..x.rows {
        let o = out.row_mut(i);
        for (k, &a) in x.row(i).iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (y, &wv) in o.iter_mut().zip(&w[k * b..(k + 1) * b]) {
                *y += a * wv;
            }
        }
    }
    out
}

/// `dy (n x b) * wᵀ` for `w` of shape `a x b`.
fn mul_slice_t(dy: &Mat, w: &[f64], a: usize) -> Mat {
    let b = dy.cols;
    Mat::from_fn(dy.rows, a, |i, k| dot(dy.row(i), &w[k * b..(k + 1) * b]))
}

/// `dw += xᵀ dy` with `dw` a row-major `a x b` slice.
fn acc_t_mul(x: &Mat, dy: &Mat, dw: &mut [f64]) {
    let b = dy.cols;
    for i in 0..x.rows {
        let g = dy.row(i);
        for (k, &a) in x.row(i).iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (d, &gv) in dw[k * b..(k + 1) * b].iter_mut().zip(g) {
                *d += a * gv;
            }
        }
    }
}

fn acc_rows(dy: &Mat, db: &mut [f64]) {
    for i in 0..dy.rows {
        for (d, &g) in db.iter_mut().zip(dy.row(i)) {
            *d += g;
        }
    }
}

impl Actor {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let dct = DctBank::new(config.max_len);
        Ok(Self { config, layout, dct })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn param_count(&self) -> usize {
        self.layout.len()
    }

    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        self.layout.init(seed)
    }

    /// Next-slot logits for a partially grown tree.
    pub fn predict_next(&self, params: &[f64], prefix: &TreeBuilder) -> Result<Vec<f64>> {
        if prefix.is_complete() {
            return Err(Error::Usage("tree has no open slot".into()));
        }
        let tokens: Vec<usize> = prefix.nodes().iter().map(|n| n.token).collect();
        let positions: Vec<Position> = prefix.nodes().iter().map(|n| n.position).collect();
        let ctx = Context {
            tokens: &tokens,
            positions: &positions,
            query: prefix.next_position(),
        };
        Ok(self.forward(params, &ctx)?.logits)
    }

    fn embed(&self, params: &[f64], ctx: &Context) -> Mat {
        let r = self.config.embed_dim;
        let n = ctx.tokens.len() + 1;
        let mut x = Mat::zeros(n, r);
        let table = &params[self.layout.embed..];
        for i in 0..n {
            let (token, pos) = if i + 1 == n {
                (self.config.vocab, ctx.query)
            } else {
                (ctx.tokens[i], ctx.positions[i])
            };
            let row = x.row_mut(i);
            dpe_encode_into(pos.depth as f64, pos.horizontal, r / 2, row);
            for (v, &e) in row.iter_mut().zip(&table[token * r..(token + 1) * r]) {
                *v += e;
            }
        }
        x
    }

    pub fn forward(&self, params: &[f64], ctx: &Context) -> Result<Forward> {
        let cfg = &self.config;
        let (r, f) = (cfg.embed_dim, cfg.ffn_dim);
        let n = ctx.tokens.len() + 1;
        if n > cfg.max_len {
            return Err(Error::Usage(format!(
                "sequence of {n} rows exceeds the model limit of {}",
                cfg.max_len
            )));
        }
        if ctx.tokens.len() != ctx.positions.len() {
            return Err(Error::Usage("token and position counts differ".into()));
        }
        if let Some(&t) = ctx.tokens.iter().find(|&&t| t >= cfg.vocab) {
            return Err(Error::Usage(format!("token id {t} outside vocabulary")));
        }
        let c = self.dct.get(n);
        let m = cfg.dct_clip.min(n);
        let mut x = self.embed(params, ctx);
        let mut rows: Vec<usize> = (0..n).collect();
        let mut caches = Vec::with_capacity(cfg.layers);

        for (l, off) in self.layout.layers.iter().enumerate() {
            let last = l + 1 == cfg.layers;
            let (u, ln1) = layer_norm(&x, &params[off.ln1_gain..off.ln1_gain + r], &params[off.ln1_bias..off.ln1_bias + r]);
            // low-pass DCT of the normalised sequence
            let mut z = Mat::zeros(m, r);
            for k in 0..m {
                for j in 0..n {
                    let w = c.get(k, j);
                    for (zv, &uv) in z.row_mut(k).iter_mut().zip(u.row(j)) {
                        *zv += w * uv;
                    }
                }
            }
            let wq = Mat::from_vec(r, r, params[off.q..off.q + r * r].to_vec());
            let wk = Mat::from_vec(r, r, params[off.k..off.k + r * r].to_vec());
            let wv = Mat::from_vec(r, r, params[off.v..off.v + r * r].to_vec());
            let att = freq_attention(&z, &wq, &wk, &wv);

            let start = if last { n - 1 } else { 0 };
            let count = n - start;
            let mut y = Mat::zeros(count, r);
            for (o, j) in (start..n).enumerate() {
                let yrow = y.row_mut(o);
                yrow.copy_from_slice(x.row(j));
                for k in 0..m {
                    let w = c.get(k, j);
                    for (yv, &av) in yrow.iter_mut().zip(att.output.row(k)) {
                        *yv += w * av;
                    }
                }
            }
            let (w, ln2) = layer_norm(&y, &params[off.ln2_gain..off.ln2_gain + r], &params[off.ln2_bias..off.ln2_bias + r]);
            let mut pre = mul_slice(&w, &params[off.w1..off.w1 + r * f], f);
            for i in 0..pre.rows {
                for (p, &b) in pre.row_mut(i).iter_mut().zip(&params[off.b1..off.b1 + f]) {
                    *p += b;
                }
            }
            let mut hidden = pre.clone();
            for v in &mut hidden.data {
                *v = v.max(0.0);
            }
            let out = mul_slice(&hidden, &params[off.w2..off.w2 + f * r], r);
            let mut next = y;
            for i in 0..next.rows {
                let b2 = &params[off.b2..off.b2 + r];
                for ((nv, &ov), &bv) in next.row_mut(i).iter_mut().zip(out.row(i)).zip(b2) {
                    *nv += ov + bv;
                }
            }
            rows = (start..n).collect();
            caches.push(LayerCache {
                ln1,
                z,
                att,
                start,
                ln2,
                w,
                pre,
            });
            x = next;
        }

        let lg = &params[self.layout.lnf_gain..self.layout.lnf_gain + r];
        let lb = &params[self.layout.lnf_bias..self.layout.lnf_bias + r];
        let query = Mat::from_vec(1, r, x.row(x.rows - 1).to_vec());
        let (zf, lnf) = layer_norm(&query, lg, lb);
        let v = cfg.vocab;
        let hw = &params[self.layout.head_w..self.layout.head_w + r * v];
        let mut logits = params[self.layout.head_b..self.layout.head_b + v].to_vec();
        for (i, &zv) in zf.data.iter().enumerate() {
            for (lv, &w) in logits.iter_mut().zip(&hw[i * v..(i + 1) * v]) {
                *lv += zv * w;
            }
        }
        Ok(Forward {
            logits,
            rows,
            layers: caches,
            lnf,
            zf: zf.data,
        })
    }

    /// Accumulates `d(loss)/d(params)` into `grad` given `d(loss)/d(logits)`.
    pub fn backward(&self, params: &[f64], ctx: &Context, fwd: &Forward, dlogits: &[f64], grad: &mut [f64]) {
        let cfg = &self.config;
        let (r, f, v) = (cfg.embed_dim, cfg.ffn_dim, cfg.vocab);
        let lay = &self.layout;
        let n = ctx.tokens.len() + 1;
        let c = self.dct.get(n);
        let m = cfg.dct_clip.min(n);
        debug_assert_eq!(fwd.rows.len(), 1);

        // head
        let hw = &params[lay.head_w..lay.head_w + r * v];
        for (i, &zv) in fwd.zf.iter().enumerate() {
            for (g, &dl) in grad[lay.head_w + i * v..lay.head_w + (i + 1) * v].iter_mut().zip(dlogits) {
                *g += zv * dl;
            }
        }
        for (g, &dl) in grad[lay.head_b..lay.head_b + v].iter_mut().zip(dlogits) {
            *g += dl;
        }
        let dzf = Mat::from_fn(1, r, |_, i| dot(&hw[i * v..(i + 1) * v], dlogits));
        let mut dgain = vec![0.0; r];
        let mut dbias = vec![0.0; r];
        let mut dx = layer_norm_backward(&dzf, &fwd.lnf, &params[lay.lnf_gain..lay.lnf_gain + r], &mut dgain, &mut dbias);
        add_into(&mut grad[lay.lnf_gain..lay.lnf_gain + r], &dgain);
        add_into(&mut grad[lay.lnf_bias..lay.lnf_bias + r], &dbias);

        let scale = 1.0 / (r as f64).sqrt();
        for (l, off) in lay.layers.iter().enumerate().rev() {
            let cache = &fwd.layers[l];
            let start = cache.start;
            // feed-forward half: out = relu(w W1 + b1) W2 + b2 on rows start..n
            let d_out = &dx;
            let mut hidden = cache.pre.clone();
            for h in &mut hidden.data {
                *h = h.max(0.0);
            }
            acc_t_mul(&hidden, d_out, &mut grad[off.w2..off.w2 + f * r]);
            acc_rows(d_out, &mut grad[off.b2..off.b2 + r]);
            let mut d_pre = mul_slice_t(d_out, &params[off.w2..off.w2 + f * r], f);
            for (d, &p) in d_pre.data.iter_mut().zip(&cache.pre.data) {
                if p <= 0.0 {
                    *d = 0.0;
                }
            }
            acc_t_mul(&cache.w, &d_pre, &mut grad[off.w1..off.w1 + r * f]);
            acc_rows(&d_pre, &mut grad[off.b1..off.b1 + f]);
            let d_w = mul_slice_t(&d_pre, &params[off.w1..off.w1 + r * f], r);
            dgain.fill(0.0);
            dbias.fill(0.0);
            let d_y_ln = layer_norm_backward(&d_w, &cache.ln2, &params[off.ln2_gain..off.ln2_gain + r], &mut dgain, &mut dbias);
            add_into(&mut grad[off.ln2_gain..off.ln2_gain + r], &dgain);
            add_into(&mut grad[off.ln2_bias..off.ln2_bias + r], &dbias);
            let mut d_y = dx.clone();
            add_into(&mut d_y.data, &d_y_ln.data);

            // attention half: y = x + (C_mᵀ A) on rows start..n
            let mut d_x_in = Mat::zeros(n, r);
            let mut d_a = Mat::zeros(m, r);
            for (o, j) in (start..n).enumerate() {
                add_into(d_x_in.row_mut(j), d_y.row(o));
                for k in 0..m {
                    let w = c.get(k, j);
                    for (da, &dyv) in d_a.row_mut(k).iter_mut().zip(d_y.row(o)) {
                        *da += w * dyv;
                    }
                }
            }
            let att = &cache.att;
            let d_p = d_a.matmul_t(&att.values);
            let d_values = att.weights.t_matmul(&d_a);
            let mut d_s = Mat::zeros(m, m);
            for i in 0..m {
                let p = att.weights.row(i);
                let dp = d_p.row(i);
                let inner = dot(p, dp);
                for (j, ds) in d_s.row_mut(i).iter_mut().enumerate() {
                    *ds = p[j] * (dp[j] - inner) * scale;
                }
            }
            let d_queries = d_s.matmul(&att.keys);
            let d_keys = d_s.t_matmul(&att.queries);
            acc_t_mul(&cache.z, &d_queries, &mut grad[off.q..off.q + r * r]);
            acc_t_mul(&cache.z, &d_keys, &mut grad[off.k..off.k + r * r]);
            acc_t_mul(&cache.z, &d_values, &mut grad[off.v..off.v + r * r]);
            let mut d_z = mul_slice_t(&d_queries, &params[off.q..off.q + r * r], r);
            add_into(&mut d_z.data, &mul_slice_t(&d_keys, &params[off.k..off.k + r * r], r).data);
            add_into(&mut d_z.data, &mul_slice_t(&d_values, &params[off.v..off.v + r * r], r).data);
            let mut d_u = Mat::zeros(n, r);
            for k in 0..m {
                for j in 0..n {
                    let w = c.get(k, j);
                    for (du, &dz) in d_u.row_mut(j).iter_mut().zip(d_z.row(k)) {
                        *du += w * dz;
                    }
                }
            }
            dgain.fill(0.0);
            dbias.fill(0.0);
            let d_x_ln = layer_norm_backward(&d_u, &cache.ln1, &params[off.ln1_gain..off.ln1_gain + r], &mut dgain, &mut dbias);
            add_into(&mut grad[off.ln1_gain..off.ln1_gain + r], &dgain);
            add_into(&mut grad[off.ln1_bias..off.ln1_bias + r], &dbias);
            add_into(&mut d_x_in.data, &d_x_ln.data);
            dx = d_x_in;
        }

        for i in 0..n {
            let token = if i + 1 == n { v } else { ctx.tokens[i] };
            add_into(&mut grad[lay.embed + token * r..lay.embed + (token + 1) * r], dx.row(i));
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
